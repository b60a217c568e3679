//! Data-driven approximation of Koopman, Perron–Frobenius, generator and
//! forward-backward operators.
//!
//! Every fitting routine returns the forward matrix `M` that maps feature
//! vectors to their (expected) images, so `Φ(y) ≈ M Φ(x)`. Eigenfunction
//! coefficients `ξ` with `φ = ξᵀΦ` are eigenvectors of `Mᵀ`.

mod dmd;
mod edmd;
mod kernel;
mod kmeans;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::{eig_real, to_complex, EigenDecomposition};
use crate::scalar::Real;

pub use dmd::{dmd_eigen_to_energy, dmd_fit, generator_eigenvalue_from_koopman};
pub use edmd::{cca_default_eps, cca_fit, edmd_fit, gedmd_fit, gedmd_from_covariances, OperatorKind};
pub use kernel::{kernel_cca, kernel_edmd_fit, KernelCca, KernelEigenfunctions, KernelSpec};
pub use kmeans::{cluster_coherent_sets, kmeans, KMeansResult};

/// Default relative truncation for pseudoinverses.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// How eigenpairs are ordered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SortOrder {
    /// Descending real part.
    RealPartDesc,
    /// Descending modulus.
    ModulusDesc,
    /// As returned by the solver.
    Unsorted,
}

/// Eigenvalues with their coefficient vectors (columns).
#[derive(Clone, Debug)]
pub struct EigenResult<T: Real> {
    pub values: Vec<Complex<T>>,
    pub vectors: DMatrix<Complex<T>>,
    pub order: SortOrder,
    /// Numerical rank of the data used for the fit.
    pub rank: usize,
    pub meta: EigenMeta,
}

/// Bookkeeping attached to an [`EigenResult`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EigenMeta {
    pub method: String,
    pub dt: Option<f64>,
    pub eps: Option<f64>,
    pub truncation: Option<f64>,
    pub labels: Vec<String>,
}

impl<T: Real> EigenResult<T> {
    pub fn from_decomposition(mut eig: EigenDecomposition<T>, order: SortOrder, rank: usize, meta: EigenMeta) -> Self {
        match order {
            SortOrder::RealPartDesc => eig.sort_by_key_desc(|z| z.re),
            SortOrder::ModulusDesc => eig.sort_by_key_desc(|z| z.norm_sqr()),
            SortOrder::Unsorted => {}
        }
        Self { values: eig.values, vectors: eig.vectors, order, rank, meta }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn truncate(&mut self, k: usize) {
        let k = k.min(self.values.len());
        self.values.truncate(k);
        self.vectors = self.vectors.columns(0, k).into_owned();
    }

    /// Keeps the listed eigenpairs in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let cols: Vec<_> = idx.iter().map(|&i| self.vectors.column(i).into_owned()).collect();
        Self {
            values: idx.iter().map(|&i| self.values[i]).collect(),
            vectors: DMatrix::from_columns(&cols),
            order: SortOrder::Unsorted,
            rank: self.rank,
            meta: self.meta.clone(),
        }
    }

    /// JSON layout `{eigenvalues: [[re, im]], coefficients: [[[re, im]]], labels, meta}`,
    /// with `coefficients[ℓ]` the coefficient vector of eigenpair `ℓ`.
    pub fn to_json(&self) -> serde_json::Value {
        let pair = |z: &Complex<T>| [z.re.to_f64_lossy(), z.im.to_f64_lossy()];
        let values: Vec<[f64; 2]> = self.values.iter().map(pair).collect();
        let coefficients: Vec<Vec<[f64; 2]>> =
            self.vectors.column_iter().map(|c| c.iter().map(pair).collect()).collect();
        serde_json::json!({
            "eigenvalues": values,
            "coefficients": coefficients,
            "labels": self.meta.labels,
            "order": self.order,
            "rank": self.rank,
            "meta": {
                "method": self.meta.method,
                "dt": self.meta.dt,
                "eps": self.meta.eps,
                "truncation": self.meta.truncation,
            },
        })
    }
}

/// Eigenpairs of `Mᵀ`, i.e. eigenfunction coefficients for the forward
/// matrix `M`.
pub fn eigenfunctions_of<T: Real>(m: &DMatrix<T>, order: SortOrder, rank: usize, meta: EigenMeta) -> EigenResult<T> {
    EigenResult::from_decomposition(eig_real(&m.transpose()), order, rank, meta)
}

/// Eigenpairs of `Mᵀ` restricted to the range of `C_xx = Φ_x Φ_xᵀ / m`,
/// spanned by its eigenvectors above `rel_tol` times the largest one.
///
/// A forward matrix built with a truncated pseudoinverse annihilates the
/// discarded directions, which [`eigenfunctions_of`] reports as spurious
/// zero eigenvalues; here the solve happens in the `r`-dimensional range,
/// `Uᵣᵀ Mᵀ Uᵣ w = λ w`, and coefficients are mapped back as `ξ = Uᵣ w`.
pub fn eigenfunctions_in_range<T: Real>(
    m: &DMatrix<T>,
    phi_x: &DMatrix<T>,
    rel_tol: T,
    order: SortOrder,
    meta: EigenMeta,
) -> Result<EigenResult<T>> {
    let n = phi_x.nrows();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: m.nrows() });
    }
    if phi_x.ncols() == 0 {
        return Err(Error::EmptyData);
    }
    let c = phi_x * phi_x.transpose() / T::usize(phi_x.ncols());
    let sym = nalgebra::SymmetricEigen::new((&c + c.transpose()) * T::lit(0.5));
    let top = sym.eigenvalues.iter().fold(T::zero(), |a, &v| a.max(v));
    let keep: Vec<usize> = (0..n).filter(|&i| sym.eigenvalues[i] > top * rel_tol).collect();
    if keep.is_empty() {
        return Err(Error::EmptyData);
    }
    let u = DMatrix::from_columns(&keep.iter().map(|&i| sym.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    let reduced = u.transpose() * m.transpose() * &u;
    let mut eig = eig_real(&reduced);
    eig.vectors = to_complex(&u) * &eig.vectors;
    Ok(EigenResult::from_decomposition(eig, order, keep.len(), meta))
}

/// Turns raw complex eigenfunction samples into real curves with unit
/// sup-norm, positive at the first point where the curve is not negligible.
pub fn normalize_eigenfunction<T: Real>(values: &[Complex<T>]) -> Vec<T> {
    let Some(peak) = values.iter().copied().max_by(|a, b| a.norm_sqr().partial_cmp(&b.norm_sqr()).unwrap()) else {
        return vec![];
    };
    let pn = peak.norm_sqr().sqrt();
    if pn == T::zero() {
        return vec![T::zero(); values.len()];
    }
    let phase = peak.conj() / pn;
    let mut out: Vec<T> = values.iter().map(|z| (*z * phase).re).collect();
    let sup = out.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let thresh = T::lit(1e-6) * sup;
    let sign = out.iter().find(|v| v.abs() > thresh).map_or(T::one(), |v| v.signum());
    for v in out.iter_mut() {
        *v = *v * sign / sup;
    }
    out
}

/// Eigenfunctions `φ_ℓ = ξ_ℓᵀ Φ` at the columns of `points` (`d × p`),
/// returned as a `p × k` matrix normalized column by column.
pub fn eigfun_eval<T: Real>(result: &EigenResult<T>, dict: &Dictionary<T>, points: &DMatrix<T>) -> Result<DMatrix<T>> {
    let raw = eigfun_eval_raw(result, dict, points)?;
    Ok(normalize_columns(&raw))
}

/// Unnormalized complex eigenfunction values, `p × k`.
pub fn eigfun_eval_raw<T: Real>(
    result: &EigenResult<T>,
    dict: &Dictionary<T>,
    points: &DMatrix<T>,
) -> Result<DMatrix<Complex<T>>> {
    if result.vectors.nrows() != dict.len() {
        return Err(Error::DimensionMismatch { expected: dict.len(), got: result.vectors.nrows() });
    }
    let phi = dict.eval_matrix(points)?.map(|v| Complex::new(v, T::zero()));
    Ok(phi.transpose() * &result.vectors)
}

pub fn normalize_columns<T: Real>(raw: &DMatrix<Complex<T>>) -> DMatrix<T> {
    let cols: Vec<_> = raw
        .column_iter()
        .map(|c| nalgebra::DVector::from_vec(normalize_eigenfunction(&c.iter().copied().collect::<Vec<_>>())))
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(raw.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Approximate eigenstates from transfer-operator eigenfunctions and the
/// ground state: multiplication for Koopman, division for Perron–Frobenius.
pub fn excited_states_from_ground<T: Real>(
    eigfuns: &DMatrix<T>,
    psi0: &[T],
    kind: OperatorKind,
) -> Result<DMatrix<T>> {
    if psi0.len() != eigfuns.nrows() {
        return Err(Error::DimensionMismatch { expected: eigfuns.nrows(), got: psi0.len() });
    }
    let sup = psi0.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let mut out = eigfuns.clone();
    for (i, &g) in psi0.iter().enumerate() {
        match kind {
            OperatorKind::Koopman => out.row_mut(i).scale_mut(g),
            OperatorKind::PerronFrobenius => {
                if !(g.abs() > T::lit(1e-12) * sup) {
                    return Err(Error::DivisionByZero(i));
                }
                out.row_mut(i).unscale_mut(g);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_fixes_phase_scale_and_sign() {
        let z = |re: f64, im: f64| Complex::new(re, im);
        let rot = Complex::new(0.0, 1.0) * 3.0;
        let v = vec![z(-1.0, 0.0) * rot, z(2.0, 0.0) * rot, z(0.5, 0.0) * rot];
        let n = normalize_eigenfunction(&v);
        assert!((n[0] - 0.5).abs() < 1e-15);
        assert!((n[1] + 1.0).abs() < 1e-15);
        assert!((n[2] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn range_restriction_drops_truncated_directions() {
        let x = DMatrix::from_fn(1, 8, |_, j| j as f64 - 3.5);
        let phi = DMatrix::from_fn(2, 8, |i, j| (i + 1) as f64 * x[(0, j)]);
        let m = crate::estimators::edmd_fit(&phi, &(&phi * 0.5), OperatorKind::Koopman, 1e-10).unwrap();
        let full = eigenfunctions_of(&m, SortOrder::RealPartDesc, 1, EigenMeta::default());
        assert_eq!(full.len(), 2);
        assert!(full.values[1].norm() < 1e-12);
        let r = eigenfunctions_in_range(&m, &phi, 1e-10, SortOrder::RealPartDesc, EigenMeta::default()).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r.values[0].re - 0.5).abs() < 1e-12);
        let v = &r.vectors;
        assert!((v[(1, 0)] / v[(0, 0)] - Complex::new(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn ground_eigenfunction_returns_ground_state() {
        let ones = DMatrix::from_element(4, 1, 1.0);
        let psi0 = [0.1, 0.5, 0.9, 0.2];
        let k = excited_states_from_ground(&ones, &psi0, OperatorKind::Koopman).unwrap();
        assert_eq!(k.column(0).as_slice(), &psi0);
        let bad = [0.1, 0.0, 0.9, 0.2];
        assert!(matches!(
            excited_states_from_ground(&ones, &bad, OperatorKind::PerronFrobenius),
            Err(Error::DivisionByZero(1))
        ));
    }

    #[test]
    fn in_sample_evaluation_is_features_times_coefficients() {
        let dict = Dictionary::<f64>::monomials(1, 2);
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.2, 0.0, 0.25]);
        let res = eigenfunctions_of(&m, SortOrder::RealPartDesc, 3, EigenMeta::default());
        let pts = DMatrix::from_row_slice(1, 4, &[-1.0, 0.0, 0.5, 2.0]);
        let raw = eigfun_eval_raw(&res, &dict, &pts).unwrap();
        let phi = dict.eval_matrix(&pts).unwrap();
        for j in 0..4 {
            for l in 0..3 {
                let manual: Complex<f64> =
                    (0..3).map(|k| res.vectors[(k, l)] * phi[(k, j)]).fold(Complex::new(0.0, 0.0), |a, b| a + b);
                assert!((manual - raw[(j, l)]).norm() < 1e-14);
            }
        }
        let json = res.to_json();
        assert_eq!(json["eigenvalues"].as_array().unwrap().len(), 3);
    }
}
