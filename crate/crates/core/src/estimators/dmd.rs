use nalgebra::{Complex, ComplexField, DMatrix};

use crate::error::{Error, Result};
use crate::linalg::right_divide;
use crate::pde::TimeMode;
use crate::scalar::Real;

/// Least-squares propagator `A = Y X⁺` for snapshot pairs stored as columns.
pub fn dmd_fit<N, T>(x: &DMatrix<N>, y: &DMatrix<N>, rel_tol: T) -> Result<DMatrix<N>>
where
    N: ComplexField<RealField = T> + Copy,
    T: Real,
{
    if x.ncols() == 0 || x.nrows() == 0 {
        return Err(Error::EmptyData);
    }
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch { expected: x.ncols(), got: y.ncols() });
    }
    Ok(right_divide(y, x, rel_tol))
}

/// Energy from a DMD eigenvalue `μ`: `(i/Δt) log μ` in real time and
/// `−(1/Δt) log μ` in imaginary time, principal branch.
pub fn dmd_eigen_to_energy<T: Real>(mu: Complex<T>, dt: T, mode: TimeMode) -> Result<Complex<T>> {
    if mu.norm_sqr() == T::zero() {
        return Err(Error::ZeroEigenvalue);
    }
    let log = Complex::new(mu.norm_sqr().sqrt().ln(), mu.im.atan2(mu.re));
    Ok(match mode {
        TimeMode::Real => Complex::new(-log.im / dt, log.re / dt),
        TimeMode::Imaginary => -log / dt,
    })
}

/// Generator eigenvalue `λ = log(μ)/Δt` from a transfer-operator eigenvalue.
pub fn generator_eigenvalue_from_koopman<T: Real>(mu: Complex<T>, dt: T) -> Result<Complex<T>> {
    if mu.norm_sqr() == T::zero() {
        return Err(Error::ZeroEigenvalue);
    }
    Ok(Complex::new(mu.norm_sqr().sqrt().ln(), mu.im.atan2(mu.re)) / dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::trajectory_rng;
    use rand::Rng;

    #[test]
    fn doubling_map() {
        let x = DMatrix::<f64>::from_fn(3, 6, |i, j| ((i + 2 * j) as f64).sin() + (i == j % 3) as u8 as f64);
        let a = dmd_fit(&x, &(&x * 2.0), 1e-10).unwrap();
        assert!((a - DMatrix::identity(3, 3) * 2.0).norm() < 1e-12);
    }

    #[test]
    fn recovers_random_linear_map() {
        let mut rng = trajectory_rng(7, 0);
        let x = DMatrix::<f64>::from_fn(5, 20, |_, _| rng.random_range(-1.0..1.0));
        let a_true = DMatrix::<f64>::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let a = dmd_fit(&x, &(&a_true * &x), 1e-10).unwrap();
        assert!((a - a_true).norm() < 1e-10);
    }

    #[test]
    fn regression_residual_is_minimal() {
        let mut rng = trajectory_rng(8, 0);
        let x = DMatrix::<f64>::from_fn(4, 30, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::<f64>::from_fn(4, 30, |_, _| rng.random_range(-1.0..1.0));
        let a = dmd_fit(&x, &y, 1e-10).unwrap();
        let base = (&y - &a * &x).norm();
        for _ in 0..10 {
            let e = DMatrix::<f64>::from_fn(4, 4, |_, _| rng.random_range(-1e-3..1e-3));
            assert!((&y - (&a + e) * &x).norm() > base);
        }
    }

    #[test]
    fn empty_data_is_rejected() {
        let x = DMatrix::<f64>::zeros(3, 0);
        assert!(matches!(dmd_fit(&x, &x, 1e-10), Err(Error::EmptyData)));
    }

    #[test]
    fn energies_from_eigenvalues() {
        // the tabulated pair (0.999 − 0.045i, 0.499) is not consistent with the
        // map; the eigenvalue of a mode with energy 0.499 has phase −0.0499
        let e = dmd_eigen_to_energy(Complex::new(0.999f64, -0.045), 0.1, TimeMode::Real).unwrap();
        assert!((e.re - 0.450).abs() < 2e-3);
        let mu = Complex::new(0.0f64, -0.0499).exp();
        let e = dmd_eigen_to_energy(mu, 0.1, TimeMode::Real).unwrap();
        assert!((e.re - 0.499).abs() < 2e-3);
        let e = dmd_eigen_to_energy(Complex::new(0.989f64, -0.149), 0.1, TimeMode::Real).unwrap();
        assert!((e.re - 1.498).abs() < 5e-3);
        for mode in [TimeMode::Real, TimeMode::Imaginary] {
            assert_eq!(dmd_eigen_to_energy(Complex::new(1.0f64, 0.0), 0.1, mode).unwrap().norm(), 0.0);
        }
        // −log(0.951)/0.1 ≈ 0.502, not 0.450
        let e = dmd_eigen_to_energy(Complex::new(0.951f64, 0.0), 0.1, TimeMode::Imaginary).unwrap();
        assert!((e.re - 0.5024).abs() < 1e-3);
        assert!(matches!(
            dmd_eigen_to_energy(Complex::new(0.0f64, 0.0), 0.1, TimeMode::Real),
            Err(Error::ZeroEigenvalue)
        ));
    }

    #[test]
    fn exact_phase_round_trip() {
        let e = 2.5f64;
        let mu = Complex::new(0.0, -e * 0.1).exp();
        assert!((dmd_eigen_to_energy(mu, 0.1, TimeMode::Real).unwrap().re - e).abs() < 1e-12);
        let l = generator_eigenvalue_from_koopman(Complex::new((-0.35f64).exp(), 0.0), 0.1).unwrap();
        assert!((l.re + 3.5).abs() < 1e-12);
    }
}
