use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::{condition_number, pinv_truncated, rank};
use crate::scalar::Real;
use crate::sde::DriftDiffusionSpec;

use super::{eigenfunctions_of, EigenMeta, EigenResult, SortOrder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Koopman,
    PerronFrobenius,
}

fn covariance<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let m = T::usize(a.ncols());
    a * b.transpose() / m
}

fn check_pair<T: Real>(phi_x: &DMatrix<T>, phi_y: &DMatrix<T>) -> Result<()> {
    if phi_x.ncols() == 0 || phi_x.nrows() == 0 {
        return Err(Error::EmptyData);
    }
    if phi_x.shape() != phi_y.shape() {
        return Err(Error::DimensionMismatch { expected: phi_x.ncols(), got: phi_y.ncols() });
    }
    Ok(())
}

/// EDMD forward matrix from feature matrices `Φ_x`, `Φ_y` (`n × m`):
/// `Kᵀ = C_yx C_xx⁺` or `Pᵀ = C_xy C_xx⁺`.
pub fn edmd_fit<T: Real>(phi_x: &DMatrix<T>, phi_y: &DMatrix<T>, kind: OperatorKind, rel_tol: T) -> Result<DMatrix<T>> {
    check_pair(phi_x, phi_y)?;
    let cxx_pinv = pinv_truncated(&covariance(phi_x, phi_x), rel_tol);
    Ok(match kind {
        OperatorKind::Koopman => covariance(phi_y, phi_x) * cxx_pinv,
        OperatorKind::PerronFrobenius => covariance(phi_x, phi_y) * cxx_pinv,
    })
}

/// Generator forward matrix `Lᵀ = C_dx C_xx⁺` from covariances.
pub fn gedmd_from_covariances<T: Real>(c_xx: &DMatrix<T>, c_dx: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    c_dx * pinv_truncated(c_xx, rel_tol)
}

/// gEDMD: regresses `dΦ = (b·∇ + ½σ²Δ)Φ` on `Φ` at the sample columns of
/// `xs` (`d × m`), evaluating the drift at time zero.
pub fn gedmd_fit<T: Real>(
    xs: &DMatrix<T>,
    dict: &Dictionary<T>,
    spec: &DriftDiffusionSpec<T>,
    rel_tol: T,
) -> Result<DMatrix<T>> {
    if !dict.has_derivatives() {
        return Err(Error::DerivativesUnavailable);
    }
    if xs.ncols() == 0 {
        return Err(Error::EmptyData);
    }
    let mut drift = DMatrix::zeros(xs.nrows(), xs.ncols());
    let mut buf = vec![T::zero(); xs.nrows()];
    for j in 0..xs.ncols() {
        let x: Vec<T> = xs.column(j).iter().copied().collect();
        spec.drift_into(&x, T::zero(), &mut buf)?;
        drift.column_mut(j).copy_from_slice(&buf);
    }
    let phi = dict.eval_matrix(xs)?;
    let dphi = dict.generator_matrix(xs, &drift, spec.sigma())?;
    Ok(gedmd_from_covariances(&covariance(&phi, &phi), &covariance(&dphi, &phi), rel_tol))
}

/// Regularization `1e−6 · tr(C_xx)/n`.
pub fn cca_default_eps<T: Real>(phi_x: &DMatrix<T>) -> T {
    let c = covariance(phi_x, phi_x);
    T::lit(1e-6) * c.trace() / T::usize(c.nrows().max(1))
}

fn regularized_inverse<T: Real>(c: &DMatrix<T>, eps: T) -> Result<DMatrix<T>> {
    let reg = c + DMatrix::identity(c.nrows(), c.ncols()) * eps;
    let cond = condition_number(&reg);
    if !(cond <= T::lit(1e14)) {
        return Err(Error::IllConditioned(cond.to_f64_lossy()));
    }
    Ok(pinv_truncated(&reg, T::lit(1e-15)))
}

/// Forward-backward eigenpairs from covariance matrices.
pub fn cca_from_covariances<T: Real>(
    c_xx: &DMatrix<T>,
    c_xy: &DMatrix<T>,
    c_yy: &DMatrix<T>,
    eps: T,
) -> Result<EigenResult<T>> {
    if eps < T::zero() {
        return Err(Error::InvalidInput("regularization must be nonnegative".into()));
    }
    let lt = c_xy * regularized_inverse(c_yy, eps)? * c_xy.transpose() * regularized_inverse(c_xx, eps)?;
    let meta = EigenMeta { method: "cca".into(), eps: Some(eps.to_f64_lossy()), ..Default::default() };
    Ok(eigenfunctions_of(&lt, SortOrder::RealPartDesc, rank(c_xx, T::lit(1e-12)), meta))
}

/// CCA on feature matrices: eigenpairs `κ_ℓ` of
/// `Lᵀ = C_xy (C_yy + εI)⁻¹ C_yx (C_xx + εI)⁻¹`, descending.
pub fn cca_fit<T: Real>(phi_x: &DMatrix<T>, phi_y: &DMatrix<T>, eps: T) -> Result<EigenResult<T>> {
    check_pair(phi_x, phi_y)?;
    cca_from_covariances(&covariance(phi_x, phi_x), &covariance(phi_x, phi_y), &covariance(phi_y, phi_y), eps)
}
