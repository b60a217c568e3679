//! Closed-form quantum benchmarks and the maps between wave functions and
//! drift-diffusion processes.

mod hermite;
mod systems;
mod wave;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

pub use hermite::{hermite, hermite_all, hermite_derivative};
pub use systems::AnalyticSystem;
pub use wave::{
    coherent_state, continuity_residual, ground_state_to_sde, nelson_velocities, superposition,
    superposition_velocities, ScalarFn, VectorFn, VelocityField, WaveFunctionRS,
};

/// Schrödinger potential `W = (β/4)|∇V|² − ½ΔV` of the process with
/// potential `V`; its ground-state energy is zero.
pub fn sde_to_schrodinger_potential<T, G, L>(grad_v: G, laplacian_v: L, beta: T) -> Arc<dyn Fn(&[T]) -> T + Send + Sync>
where
    T: Real,
    G: Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    L: Fn(&[T]) -> T + Send + Sync + 'static,
{
    Arc::new(move |x| {
        let g = grad_v(x);
        let g2 = g.iter().fold(T::zero(), |a, &v| a + v * v);
        beta / T::lit(4.0) * g2 - T::lit(0.5) * laplacian_v(x)
    })
}

/// Whether the quadratic potential `½xᵀAx + bᵀx + c` is mapped to itself by
/// the process-to-Schrödinger transformation.
pub fn check_invariant_potential<T: Real>(a: &DMatrix<T>, b: &DVector<T>, c: T, beta: T) -> bool {
    let d = b.len();
    if a.shape() != (d, d) {
        return false;
    }
    let tol = T::lit(1e-12);
    let ib = T::one() / beta;
    let target = DMatrix::<T>::identity(d, d) * (T::lit(2.0) * ib);
    let a_ok = a.iter().zip(target.iter()).all(|(x, y)| (*x - *y).abs() <= tol);
    let c_expected = beta / T::lit(4.0) * b.dot(b) - ib * T::usize(d);
    a_ok && (c - c_expected).abs() <= tol
}

/// `E = E₀ − λ` for a generator eigenvalue `λ`.
pub fn energy_from_generator_eigenvalue<T: Real>(lambda: T, e0: T) -> T {
    e0 - lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn potential_from_quadratic_process() {
        let w = 1.7;
        let pot = sde_to_schrodinger_potential(move |x: &[f64]| vec![w * x[0]], move |_| w, 2.0);
        for &x in &[-1.0, 0.0, 2.5] {
            assert!((pot(&[x]) - (0.5 * w * w * x * x - w / 2.0)).abs() < 1e-12);
        }
        let flat = sde_to_schrodinger_potential(|_x: &[f64]| vec![0.0, 0.0], |_| 0.0, 3.0);
        assert_eq!(flat(&[1.0, 2.0]), 0.0);
    }

    #[test]
    fn poschl_teller_round_trip() {
        let sys = AnalyticSystem::PoschlTeller { s: 4 };
        let pot = sde_to_schrodinger_potential(
            move |x: &[f64]| {
                let mut g = vec![0.0];
                sys.ground_log_gradient(x, &mut g);
                vec![-g[0]]
            },
            move |x| -sys.ground_log_laplacian(x),
            2.0,
        );
        for i in 0..=100 {
            let x = -5.0 + 0.1 * i as f64;
            let sh = 1.0 / f64::cosh(x);
            assert!((pot(&[x]) - (-10.0 * sh * sh + 8.0)).abs() < 1e-8);
            assert!((pot(&[x]) - (sys.potential(&[x]) - sys.ground_energy())).abs() < 1e-8);
        }
    }

    #[test]
    fn invariant_quadratic_potentials() {
        assert!(check_invariant_potential(&dmatrix![1.0], &dvector![0.0], -0.5, 2.0));
        assert!(!check_invariant_potential(&dmatrix![2.0], &dvector![0.0], -0.5, 2.0));
        assert!(check_invariant_potential(&DMatrix::identity(2, 2), &dvector![1.0, 0.0], -0.5, 2.0));
    }

    #[test]
    fn generator_eigenvalues_map_to_energies() {
        assert_eq!(energy_from_generator_eigenvalue(0.0, -8.0), -8.0);
        let omega = 1.5;
        for l in 0..5 {
            let e = energy_from_generator_eigenvalue(-omega * l as f64, omega / 2.0);
            assert!((e - omega * (l as f64 + 0.5)).abs() < 1e-12);
        }
        assert!((energy_from_generator_eigenvalue(-3.49f64, -8.0) + 4.51).abs() < 1e-12);
    }
}
