//! Data-driven control route to imaginary-time wave functions.
//!
//! A control-affine SDE `dX = (b(X) + G(X) ν̂) dt + σ dB` is learned as a
//! bilinear surrogate `ż = A z + Σ_j ν_j B_j z` for the expected dictionary
//! values `z = E[Φ(X)]`. The surrogate turns the stochastic control problem
//! into a deterministic one, whose value function gives `ψ = e^{−J}`.

mod ocp;
mod value;

pub use ocp::*;
pub use value::*;

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::dictionary::Dictionary;
use crate::error::{invalid, Error, Result};
use crate::estimators::{gedmd_fit, DEFAULT_REL_TOL};
use crate::scalar::Real;
use crate::sde::DriftDiffusionSpec;

pub type MatrixFn<T> = Arc<dyn Fn(&[T]) -> DMatrix<T> + Send + Sync>;
pub type VectorField<T> = Arc<dyn Fn(&[T], &mut [T]) + Send + Sync>;

/// Control-affine family with a finite set of fixed controls.
///
/// The full control vector is `ν̂ = [fixed, ν]`; only the trailing part `ν`
/// is optimized. `controls[j]` lists the values of `ν` for system `j`.
#[derive(Clone)]
pub struct ControlFamilySpec<T: Real> {
    pub dim: usize,
    pub control_matrix: MatrixFn<T>,
    pub base_drift: VectorField<T>,
    pub sigma: T,
    pub fixed: Vec<T>,
    pub controls: Vec<Vec<T>>,
}

impl<T: Real> std::fmt::Debug for ControlFamilySpec<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlFamilySpec")
            .field("dim", &self.dim)
            .field("sigma", &self.sigma)
            .field("fixed", &self.fixed)
            .field("controls", &self.controls)
            .finish()
    }
}

impl<T: Real> ControlFamilySpec<T> {
    /// Number of free control components.
    pub fn control_dim(&self) -> usize {
        self.controls.first().map_or(0, Vec::len)
    }

    /// Drift `b(x) + G(x) [fixed, ν]`.
    pub fn drift_with(&self, x: &[T], nu: &[T], out: &mut [T]) {
        (self.base_drift)(x, out);
        let g = (self.control_matrix)(x);
        let mut full = self.fixed.clone();
        full.extend_from_slice(nu);
        for i in 0..self.dim {
            for (k, u) in full.iter().enumerate() {
                out[i] += g[(i, k)] * *u;
            }
        }
    }

    /// Autonomous SDE obtained by freezing the control at `controls[j]`.
    pub fn system(&self, j: usize) -> Result<DriftDiffusionSpec<T>> {
        let fam = self.clone();
        let nu = self.controls[j].clone();
        DriftDiffusionSpec::new(self.dim, self.sigma, move |x: &[T], _t: T, out: &mut [T]| {
            fam.drift_with(x, &nu, out)
        })
    }

    /// Time-dependent SDE driven by a piecewise-constant control signal.
    pub fn controlled_system(&self, control: &ControlSignal<T>) -> Result<DriftDiffusionSpec<T>> {
        let fam = self.clone();
        let control = control.clone();
        DriftDiffusionSpec::new(self.dim, self.sigma, move |x: &[T], t: T, out: &mut [T]| {
            let nu = control.value_at(t);
            fam.drift_with(x, &nu, out)
        })
        .map(|s| s.time_dependent(true))
    }
}

/// Stabilized Ornstein–Uhlenbeck family in `d` dimensions:
/// `G(x) = [diag(−x) I]`, `ν̂ = [1…1, ν]`, `σ = 1`, fixed controls
/// `U = {0, e_1, …, e_d}`. With `ν = U_j` the drift is `−(x − U_j)`.
pub fn build_stabilized_family<T: Real>(d: usize) -> Result<ControlFamilySpec<T>> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    let control_matrix: MatrixFn<T> = Arc::new(move |x: &[T]| {
        let mut g = DMatrix::zeros(d, 2 * d);
        for i in 0..d {
            g[(i, i)] = -x[i];
            g[(i, d + i)] = T::one();
        }
        g
    });
    let base_drift: VectorField<T> = Arc::new(|_x: &[T], out: &mut [T]| out.fill(T::zero()));
    let mut controls = vec![vec![T::zero(); d]];
    for j in 0..d {
        let mut e = vec![T::zero(); d];
        e[j] = T::one();
        controls.push(e);
    }
    Ok(ControlFamilySpec {
        dim: d,
        control_matrix,
        base_drift,
        sigma: T::one(),
        fixed: vec![T::one(); d],
        controls,
    })
}

/// How a surrogate was trained.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingMeta<T: Real> {
    pub samples: usize,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub seed: u64,
}

/// Bilinear model `ż = A z + Σ_j ν_j B_j z` for expected dictionary values.
#[derive(Clone)]
pub struct BilinearSurrogate<T: Real> {
    pub a: DMatrix<T>,
    pub b: Vec<DMatrix<T>>,
    pub dictionary: Arc<Dictionary<T>>,
    pub meta: TrainingMeta<T>,
}

impl<T: Real> std::fmt::Debug for BilinearSurrogate<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BilinearSurrogate")
            .field("a", &self.a)
            .field("b", &self.b)
            .field("labels", &self.dictionary.labels())
            .field("meta", &self.meta)
            .finish()
    }
}

fn matrix_json<T: Real>(m: &DMatrix<T>) -> Value {
    let rows: Vec<Vec<f64>> =
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].to_f64_lossy()).collect()).collect();
    json!(rows)
}

fn matrix_from_json<T: Real>(v: &Value, n: usize) -> Result<DMatrix<T>> {
    let rows = v.as_array().ok_or_else(|| Error::Format("matrix must be an array of rows".into()))?;
    if rows.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: rows.len() });
    }
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_array().ok_or_else(|| Error::Format("row must be an array".into()))?;
        if row.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: row.len() });
        }
        for (j, x) in row.iter().enumerate() {
            m[(i, j)] = T::lit(x.as_f64().ok_or_else(|| Error::Format("entry must be a number".into()))?);
        }
    }
    Ok(m)
}

impl<T: Real> BilinearSurrogate<T> {
    pub fn len(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.a.nrows() == 0
    }

    pub fn control_dim(&self) -> usize {
        self.b.len()
    }

    /// `A + Σ_j ν_j B_j`.
    pub fn system_matrix(&self, nu: &[T]) -> DMatrix<T> {
        let mut m = self.a.clone();
        for (bj, &u) in self.b.iter().zip(nu) {
            m += bj * u;
        }
        m
    }

    /// Initial state `Φ(x)`.
    pub fn lift(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.dictionary.eval(x)?.iter().copied().collect())
    }

    /// JSON document with labels, row-major matrices and training metadata.
    pub fn to_json(&self) -> Value {
        json!({
            "labels": self.dictionary.labels(),
            "A": matrix_json(&self.a),
            "B": self.b.iter().map(matrix_json).collect::<Vec<_>>(),
            "metadata": {
                "samples": self.meta.samples,
                "lower": self.meta.lower.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
                "upper": self.meta.upper.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
                "seed": self.meta.seed,
            }
        })
    }

    /// Restores a surrogate written by [`Self::to_json`]; the dictionary must
    /// carry the same labels in the same order.
    pub fn from_json(v: &Value, dictionary: Arc<Dictionary<T>>) -> Result<Self> {
        let labels: Vec<String> = serde_json::from_value(v["labels"].clone())?;
        if labels != dictionary.labels() {
            return Err(Error::Format("surrogate labels do not match the dictionary".into()));
        }
        let n = labels.len();
        let a = matrix_from_json(&v["A"], n)?;
        let b = v["B"]
            .as_array()
            .ok_or_else(|| Error::Format("`B` must be an array".into()))?
            .iter()
            .map(|m| matrix_from_json(m, n))
            .collect::<Result<Vec<_>>>()?;
        let md = &v["metadata"];
        let floats = |key: &str| -> Result<Vec<T>> {
            let xs: Vec<f64> = serde_json::from_value(md[key].clone())?;
            Ok(xs.into_iter().map(T::lit).collect())
        };
        let meta = TrainingMeta {
            samples: md["samples"].as_u64().unwrap_or(0) as usize,
            lower: floats("lower")?,
            upper: floats("upper")?,
            seed: md["seed"].as_u64().unwrap_or(0),
        };
        Ok(Self { a, b, dictionary, meta })
    }
}

/// Draws `m` uniform samples from the box `[lower, upper]` as a `d × m` matrix.
pub fn uniform_box_samples<T: Real>(lower: &[T], upper: &[T], m: usize, seed: u64) -> DMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = lower.len();
    DMatrix::from_fn(d, m, |i, _| {
        let u: f64 = rng.random();
        lower[i] + (upper[i] - lower[i]) * T::lit(u)
    })
}

/// Fits one generator per fixed control by gEDMD on a shared set of uniform
/// samples and forms `A = L_0`, `B_j = L_{U_j} − L_0`.
pub fn train_surrogate<T: Real>(
    family: &ControlFamilySpec<T>,
    dictionary: Arc<Dictionary<T>>,
    m: usize,
    lower: &[T],
    upper: &[T],
    seed: u64,
) -> Result<BilinearSurrogate<T>> {
    if lower.len() != family.dim || upper.len() != family.dim {
        return Err(Error::DimensionMismatch { expected: family.dim, got: lower.len() });
    }
    if dictionary.dim() != family.dim {
        return Err(Error::DimensionMismatch { expected: family.dim, got: dictionary.dim() });
    }
    let xs = uniform_box_samples(lower, upper, m, seed);
    let generators = (0..family.controls.len())
        .map(|j| gedmd_fit(&xs, &dictionary, &family.system(j)?, T::lit(DEFAULT_REL_TOL)))
        .collect::<Result<Vec<_>>>()?;
    let a = generators[0].clone();
    let b = generators[1..].iter().map(|l| l - &a).collect();
    Ok(BilinearSurrogate {
        a,
        b,
        dictionary,
        meta: TrainingMeta { samples: m, lower: lower.to_vec(), upper: upper.to_vec(), seed },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eig_real;

    #[test]
    fn stabilized_family_fixed_systems() {
        let fam = build_stabilized_family::<f64>(1).unwrap();
        assert_eq!(fam.controls.len(), 2);
        let mut out = [0.0];
        fam.system(0).unwrap().drift_into(&[0.7], 0.0, &mut out).unwrap();
        assert_eq!(out[0], -0.7);
        fam.system(1).unwrap().drift_into(&[0.7], 0.0, &mut out).unwrap();
        assert!((out[0] + (0.7 - 1.0)).abs() < 1e-15);
        assert_eq!(build_stabilized_family::<f64>(3).unwrap().controls.len(), 4);
        assert!(build_stabilized_family::<f64>(0).is_err());
    }

    #[test]
    fn family_control_matrix_has_full_row_rank() {
        let fam = build_stabilized_family::<f64>(3).unwrap();
        for x in [[0.0, 0.0, 0.0], [1.0, -2.0, 0.5]] {
            let g = (fam.control_matrix)(&x);
            assert_eq!(crate::linalg::rank(&g, 1e-12), 3);
        }
    }

    #[test]
    fn qho_surrogate_spectrum_and_constant_rows() {
        let fam = build_stabilized_family::<f64>(1).unwrap();
        let dict = Arc::new(Dictionary::monomials(1, 3));
        let s = train_surrogate(&fam, dict, 30_000, &[-3.0], &[3.0], 7).unwrap();
        let mut e = eig_real(&s.a);
        e.sort_by_key_desc(|z| z.re);
        for (k, z) in e.values.iter().enumerate() {
            assert!((z.re + k as f64).abs() < 5e-2, "eigenvalue {z}");
        }
        for j in 0..4 {
            assert!(s.a[(0, j)].abs() < 1e-8);
            assert!(s.b[0][(0, j)].abs() < 1e-8);
        }
        // exact generator of the monomials: L x^k = −k x^k + k ν x^{k−1} + ½ k(k−1) x^{k−2}
        for k in 1..4 {
            assert!((s.a[(k, k)] + k as f64).abs() < 1e-8);
            assert!((s.b[0][(k, k - 1)] - k as f64).abs() < 1e-8);
            if k >= 2 {
                assert!((s.a[(k, k - 2)] - 0.5 * (k * (k - 1)) as f64).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn surrogate_json_round_trip() {
        let fam = build_stabilized_family::<f64>(1).unwrap();
        let dict = Arc::new(Dictionary::monomials(1, 2));
        let s = train_surrogate(&fam, dict.clone(), 500, &[-1.0], &[1.0], 3).unwrap();
        let v = s.to_json();
        let back = BilinearSurrogate::from_json(&v, dict).unwrap();
        assert_eq!(back.a, s.a);
        assert_eq!(back.b, s.b);
        assert_eq!(back.meta, s.meta);
        let other = Arc::new(Dictionary::<f64>::monomials(1, 3));
        assert!(BilinearSurrogate::from_json(&v, other).is_err());
    }
}
