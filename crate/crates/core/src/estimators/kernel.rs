use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, eig_real, pinv_truncated, rank, symmetric_function};
use crate::scalar::Real;

use super::{EigenMeta, EigenResult, SortOrder, DEFAULT_REL_TOL};

/// Kernel family and regularization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `k(x, y) = exp(−‖x − y‖² / (2ς²))`.
    Gaussian { bandwidth: f64 },
    /// `k(x, y) = xᵀy`.
    Linear,
}

impl KernelSpec {
    pub fn eval<T: Real>(&self, x: &[T], y: &[T]) -> T {
        match *self {
            KernelSpec::Gaussian { bandwidth } => {
                let d2 = x.iter().zip(y).fold(T::zero(), |a, (&p, &q)| a + (p - q) * (p - q));
                (-d2 / T::lit(2.0 * bandwidth * bandwidth)).exp()
            }
            KernelSpec::Linear => x.iter().zip(y).fold(T::zero(), |a, (&p, &q)| a + p * q),
        }
    }

    /// Gram matrix `[i, j] = k(a_i, b_j)` for point sets stored as columns.
    pub fn gram<T: Real>(&self, a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
        let acols: Vec<Vec<T>> = a.column_iter().map(|c| c.iter().copied().collect()).collect();
        let bcols: Vec<Vec<T>> = b.column_iter().map(|c| c.iter().copied().collect()).collect();
        let rows: Vec<Vec<T>> =
            acols.par_iter().map(|x| bcols.iter().map(|y| self.eval(x, y)).collect()).collect();
        DMatrix::from_fn(acols.len(), bcols.len(), |i, j| rows[i][j])
    }
}

/// Kernel EDMD: eigenpairs of `(G_xx + εmI)⁻¹ G_yx` with
/// `G_yx[i, j] = k(y_i, x_j)`. Eigenfunctions are `φ(x) = Σ_i w_i k(x_i, x)`.
/// With `ε = 0` the truncated pseudoinverse is used instead.
pub fn kernel_edmd_fit<T: Real>(g_xx: &DMatrix<T>, g_yx: &DMatrix<T>, eps: T) -> Result<EigenResult<T>> {
    let m = g_xx.nrows();
    if m == 0 {
        return Err(Error::EmptyData);
    }
    if g_xx.shape() != (m, m) || g_yx.shape() != (m, m) {
        return Err(Error::DimensionMismatch { expected: m, got: g_yx.nrows() });
    }
    let asym = (g_xx - g_xx.transpose()).amax();
    if asym > T::lit(1e-10) * g_xx.amax().max(T::one()) {
        return Err(Error::InvalidInput("Gram matrix is not symmetric".into()));
    }
    let inv = if eps > T::zero() {
        let reg = g_xx + DMatrix::identity(m, m) * (eps * T::usize(m));
        let cond = condition_number(&reg);
        if !(cond <= T::lit(1e14)) {
            return Err(Error::IllConditioned(cond.to_f64_lossy()));
        }
        reg.clone().lu().try_inverse().ok_or(Error::IllConditioned(f64::INFINITY))?
    } else {
        pinv_truncated(g_xx, T::lit(DEFAULT_REL_TOL))
    };
    let mat = inv * g_yx;
    let meta = EigenMeta { method: "kernel-edmd".into(), eps: Some(eps.to_f64_lossy()), ..Default::default() };
    Ok(EigenResult::from_decomposition(
        eig_real(&mat),
        SortOrder::ModulusDesc,
        rank(g_xx, T::lit(DEFAULT_REL_TOL)),
        meta,
    ))
}

/// Kernel-expansion eigenfunctions attached to their training points.
#[derive(Clone, Debug)]
pub struct KernelEigenfunctions<T: Real> {
    pub kernel: KernelSpec,
    /// Training points as columns.
    pub centers: DMatrix<T>,
    pub result: EigenResult<T>,
}

impl<T: Real> KernelEigenfunctions<T> {
    /// Raw eigenfunction values at the columns of `points`, `p × k`.
    pub fn eval(&self, points: &DMatrix<T>) -> DMatrix<Complex<T>> {
        let g = self.kernel.gram(points, &self.centers).map(|v| Complex::new(v, T::zero()));
        g * &self.result.vectors
    }
}

/// Kernel CCA output: canonical correlations (descending) and eigenfunction
/// values at the training points (`m × k`).
#[derive(Clone, Debug)]
pub struct KernelCca<T: Real> {
    pub values: Vec<T>,
    pub functions: DMatrix<T>,
}

/// Kernel CCA through the symmetric form `P_x^{1/2} P_y P_x^{1/2}` with
/// `P = G (G + εmI)⁻¹`; returns the leading `k` pairs.
pub fn kernel_cca<T: Real>(g_x: &DMatrix<T>, g_y: &DMatrix<T>, eps: T, k: usize) -> Result<KernelCca<T>> {
    let m = g_x.nrows();
    if m == 0 {
        return Err(Error::EmptyData);
    }
    if !(eps > T::zero()) {
        return Err(Error::InvalidInput("kernel CCA needs positive regularization".into()));
    }
    let shift = eps * T::usize(m);
    let clip = |v: T| if v > T::zero() { v } else { T::zero() };
    let p_x_half = symmetric_function(g_x, |l| (clip(l) / (clip(l) + shift)).sqrt());
    let p_y = symmetric_function(g_y, |l| clip(l) / (clip(l) + shift));
    let mut s = &p_x_half * p_y * &p_x_half;
    s = (&s + s.transpose()) * T::lit(0.5);
    let eig = nalgebra::SymmetricEigen::new(s);
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    idx.truncate(k.min(m));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let w = DMatrix::from_columns(&idx.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    Ok(KernelCca { values, functions: p_x_half * w })
}
