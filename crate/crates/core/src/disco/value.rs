use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{solve_ocp, BilinearSurrogate, ObjectiveSpec, OcpSettings};
use crate::error::{invalid, Error, Result};
use crate::linalg::{pinv_truncated, rank};
use crate::scalar::Real;

/// Value function `J(x, s)` on a set of initial states and start times.
#[derive(Clone, Debug)]
pub struct ValueFunctionField<T: Real> {
    /// States as columns (`d × P`).
    pub points: DMatrix<T>,
    /// Start times `s`.
    pub times: Vec<T>,
    /// Horizon end `T`.
    pub horizon: T,
    /// `J` per point (rows) and start time (columns).
    pub values: DMatrix<T>,
    pub iterations: DMatrix<usize>,
    pub converged: DMatrix<bool>,
    /// Volume of the sampled region when `points` are Monte Carlo draws.
    pub region_volume: Option<T>,
}

/// Solves the control problem for every (point, start time) pair.
pub fn compute_value_field<T: Real>(
    surrogate: &BilinearSurrogate<T>,
    objective: &ObjectiveSpec<T>,
    points: &DMatrix<T>,
    times: &[T],
    horizon: T,
    settings: &OcpSettings<T>,
) -> Result<ValueFunctionField<T>> {
    let (np, nt) = (points.ncols(), times.len());
    let cells: Vec<(usize, usize)> = (0..np).flat_map(|i| (0..nt).map(move |k| (i, k))).collect();
    let solved = cells
        .par_iter()
        .map(|&(i, k)| {
            let x: Vec<T> = points.column(i).iter().copied().collect();
            solve_ocp(surrogate, objective, &x, times[k], horizon, settings)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = DMatrix::zeros(np, nt);
    let mut iterations = DMatrix::zeros(np, nt);
    let mut converged = DMatrix::from_element(np, nt, false);
    for (&(i, k), sol) in cells.iter().zip(&solved) {
        values[(i, k)] = sol.value;
        iterations[(i, k)] = sol.iterations;
        converged[(i, k)] = sol.converged;
    }
    Ok(ValueFunctionField {
        points: points.clone(),
        times: times.to_vec(),
        horizon,
        values,
        iterations,
        converged,
        region_volume: None,
    })
}

impl<T: Real> ValueFunctionField<T> {
    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    /// CSV with columns `x1..xd, tau, J, psi, iterations, converged`, where
    /// `tau = T − s` and `psi = e^{−J}` (unnormalized).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(std::fs::File::create(path)?));
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).collect();
        header.extend(["tau", "J", "psi", "iterations", "converged"].map(String::from));
        w.write_record(&header)?;
        for i in 0..self.points.ncols() {
            for (k, &s) in self.times.iter().enumerate() {
                let mut rec: Vec<String> = self.points.column(i).iter().map(|v| v.to_f64_lossy().to_string()).collect();
                let j = self.values[(i, k)];
                rec.push((self.horizon - s).to_f64_lossy().to_string());
                rec.push(j.to_f64_lossy().to_string());
                rec.push((-j).exp().to_f64_lossy().to_string());
                rec.push(self.iterations[(i, k)].to_string());
                rec.push(self.converged[(i, k)].to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Samples `ψ(x, τ) = e^{−J(x, T−τ)}` with a normalization constant.
#[derive(Clone, Debug)]
pub struct WaveFunctionSamples<T: Real> {
    /// Imaginary times `τ = T − s`, one per field column.
    pub taus: Vec<T>,
    /// Unnormalized `ψ`, points by times.
    pub psi: DMatrix<T>,
    /// `∫ ψ(x, 0) dx`; divide by it to normalize.
    pub normalization: T,
}

impl<T: Real> WaveFunctionSamples<T> {
    pub fn normalized(&self) -> DMatrix<T> {
        &self.psi / self.normalization
    }
}

/// Trapezoid integral of `f` over sorted one-dimensional nodes.
pub fn trapezoid<T: Real>(x: &[T], f: &[T]) -> T {
    x.windows(2)
        .zip(f.windows(2))
        .fold(T::zero(), |a, (xs, fs)| a + (xs[1] - xs[0]) * (fs[0] + fs[1]) * T::lit(0.5))
}

/// Integral of `f` over the field's points: trapezoid rule in one dimension
/// (points sorted by coordinate), Monte Carlo mean times the region volume
/// otherwise.
pub fn integrate_over_points<T: Real>(field: &ValueFunctionField<T>, f: &[T]) -> T {
    if field.dim() == 1 {
        let mut idx: Vec<usize> = (0..f.len()).collect();
        idx.sort_by(|&a, &b| field.points[(0, a)].partial_cmp(&field.points[(0, b)]).unwrap_or(std::cmp::Ordering::Equal));
        let xs: Vec<T> = idx.iter().map(|&i| field.points[(0, i)]).collect();
        let fs: Vec<T> = idx.iter().map(|&i| f[i]).collect();
        trapezoid(&xs, &fs)
    } else {
        let mean = f.iter().fold(T::zero(), |a, &b| a + b) / T::usize(f.len().max(1));
        mean * field.region_volume.unwrap_or(T::one())
    }
}

/// Converts a value field into wave-function samples normalized so that
/// `∫ ψ(x, 0) dx = 1`. The column with the smallest `τ` serves as `τ = 0`.
pub fn value_to_wavefunction<T: Real>(field: &ValueFunctionField<T>) -> WaveFunctionSamples<T> {
    let taus: Vec<T> = field.times.iter().map(|&s| field.horizon - s).collect();
    let psi = field.values.map(|j| (-j).exp());
    let k0 = (0..taus.len())
        .min_by(|&a, &b| taus[a].partial_cmp(&taus[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    let normalization = if taus.is_empty() {
        T::one()
    } else {
        let col: Vec<T> = psi.column(k0).iter().copied().collect();
        integrate_over_points(field, &col)
    };
    WaveFunctionSamples { taus, psi, normalization }
}

/// Optimal feedback `u*(x, s) = ∇_x J(x, s)` on a one-dimensional grid.
#[derive(Clone, Debug)]
pub struct PolicyField<T: Real> {
    pub values: DMatrix<T>,
    /// Rows where one-sided differences were used.
    pub boundary: Vec<bool>,
}

/// Central differences of `J` along the (sorted) state grid; the two end
/// rows use one-sided differences and are flagged.
pub fn optimal_policy<T: Real>(field: &ValueFunctionField<T>) -> Result<PolicyField<T>> {
    if field.dim() != 1 {
        return Err(invalid("finite-difference policies need a one-dimensional grid"));
    }
    let n = field.points.ncols();
    if n < 2 {
        return Err(invalid("at least two grid points are required"));
    }
    let x = |i: usize| field.points[(0, i)];
    if (1..n).any(|i| !(x(i) > x(i - 1))) {
        return Err(invalid("grid must be strictly increasing"));
    }
    let mut values = DMatrix::zeros(n, field.times.len());
    let mut boundary = vec![false; n];
    for k in 0..field.times.len() {
        let j = |i: usize| field.values[(i, k)];
        for i in 0..n {
            let (a, b) = if i == 0 {
                boundary[i] = true;
                (0, 1)
            } else if i == n - 1 {
                boundary[i] = true;
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            values[(i, k)] = (j(b) - j(a)) / (x(b) - x(a));
        }
    }
    Ok(PolicyField { values, boundary })
}

/// Maximum residual of `−∂_s V = ½ΔV + W − ½‖∇V‖²` over `points × times`,
/// using central differences of width `h` in every variable.
pub fn hjb_residual<T: Real>(
    v: impl Fn(&[T], T) -> T,
    w: impl Fn(&[T]) -> T,
    points: &DMatrix<T>,
    times: &[T],
    h: T,
) -> T {
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let mut worst = T::zero();
    for col in points.column_iter() {
        let x: Vec<T> = col.iter().copied().collect();
        for &s in times {
            let dt = (v(&x, s + h) - v(&x, s - h)) / (two * h);
            let v0 = v(&x, s);
            let mut lap = T::zero();
            let mut grad2 = T::zero();
            let mut xp = x.clone();
            for i in 0..x.len() {
                xp[i] = x[i] + h;
                let vp = v(&xp, s);
                xp[i] = x[i] - h;
                let vm = v(&xp, s);
                xp[i] = x[i];
                lap += (vp - two * v0 + vm) / (h * h);
                let g = (vp - vm) / (two * h);
                grad2 += g * g;
            }
            let r = (-dt - (half * lap + w(&x) - half * grad2)).abs();
            worst = worst.max(r);
        }
    }
    worst
}

/// Minimizer of `νᵀGᵀ∇V + ½‖Gν‖²` and the attained value, which must equal
/// `−½‖∇V‖²` when `G` has full row rank.
pub fn stabilized_bellman_check<T: Real>(g: &DMatrix<T>, grad_v: &[T]) -> Result<(DVector<T>, T)> {
    let d = g.nrows();
    if grad_v.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: grad_v.len() });
    }
    let r = rank(g, T::lit(1e-12));
    if r < d {
        return Err(Error::RankDeficient { rank: r, dim: d });
    }
    let gv = DVector::from_column_slice(grad_v);
    let nu = -(pinv_truncated(g, T::lit(1e-12)) * &gv);
    let g_nu = g * &nu;
    let attained = g_nu.dot(&gv) + T::lit(0.5) * g_nu.norm_squared();
    let expected = -T::lit(0.5) * gv.norm_squared();
    let tol = T::lit(1e-10) * T::one().max(gv.norm_squared());
    if (attained - expected).abs() > tol {
        return Err(Error::BellmanMismatch { attained: attained.to_f64_lossy(), expected: expected.to_f64_lossy() });
    }
    Ok((nu, attained))
}

/// Writes a slice of normalized wave-function samples next to an analytic
/// reference: columns `x1..xd, tau, psi, reference`.
pub fn write_wavefunction_csv<T: Real>(
    path: &Path,
    field: &ValueFunctionField<T>,
    samples: &WaveFunctionSamples<T>,
    reference: impl Fn(&[T], T) -> T,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = (1..=field.dim()).map(|i| format!("x{i}")).collect();
    writeln!(f, "{},tau,psi,reference", header.join(","))?;
    let psi = samples.normalized();
    for i in 0..field.points.ncols() {
        let x: Vec<T> = field.points.column(i).iter().copied().collect();
        for (k, &tau) in samples.taus.iter().enumerate() {
            let xs: Vec<String> = x.iter().map(|v| v.to_f64_lossy().to_string()).collect();
            writeln!(
                f,
                "{},{},{},{}",
                xs.join(","),
                tau.to_f64_lossy(),
                psi[(i, k)].to_f64_lossy(),
                reference(&x, tau).to_f64_lossy()
            )?;
        }
    }
    Ok(())
}
