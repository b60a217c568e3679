use koopq_core::quantum::{
    coherent_state, continuity_residual, energy_from_generator_eigenvalue, sde_to_schrodinger_potential,
    superposition, superposition_velocities, AnalyticSystem,
};
use nalgebra::{Complex, DMatrix};

fn grid(a: f64, b: f64, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, 1, |i, _| a + (b - a) * i as f64 / (n - 1) as f64)
}

fn qho_excited_superposition() -> koopq_core::quantum::WaveFunctionRS<f64> {
    let qho = AnalyticSystem::<f64>::Harmonic { omega: 1.0 };
    let psi2 = qho.eigenstate(2).unwrap();
    let coherent = coherent_state(1.0, 2.0).scaled(0.5).unwrap();
    superposition(&psi2, &coherent).unwrap()
}

#[test]
fn continuity_equation_holds_for_coherent_state_and_superposition() {
    let g = grid(-4.0, 4.0, 161);
    let coherent = coherent_state(1.0f64, 2.0);
    assert!(continuity_residual(&coherent, &g, 1.0, 1e-4) < 1e-4);
    let sup = qho_excited_superposition();
    assert!(continuity_residual(&sup, &g, 1.0, 1e-4) < 1e-4);
}

#[test]
fn superposition_velocities_match_log_derivative() {
    let qho = AnalyticSystem::<f64>::Harmonic { omega: 1.0 };
    let psi2 = qho.eigenstate(2).unwrap();
    let coherent = coherent_state(1.0, 2.0).scaled(0.5).unwrap();
    let vel = superposition_velocities(&psi2, &coherent).unwrap();
    let total = |x: f64, t: f64| -> Complex<f64> { psi2.value(&[x], t) + coherent.value(&[x], t) };
    let h = 1e-5;
    for i in 0..41 {
        let x = -3.0 + 0.15 * i as f64;
        for t in [0.0, 0.7, 2.3] {
            let psi = total(x, t);
            if psi.norm() < 1e-3 {
                continue;
            }
            let dpsi = (total(x + h, t) - total(x - h, t)) / (2.0 * h);
            let log_d = dpsi / psi;
            let u = vel.osmotic(&[x], t).unwrap()[0];
            let v = vel.current(&[x], t).unwrap()[0];
            assert!((u - log_d.re).abs() < 1e-6, "osmotic at x={x}, t={t}: {u} vs {}", log_d.re);
            assert!((v - log_d.im).abs() < 1e-6, "current at x={x}, t={t}: {v} vs {}", log_d.im);
        }
    }
}

#[test]
fn potential_round_trip_recovers_shifted_energy() {
    // ground-state process of W has Schrödinger potential W − E₀
    for sys in [AnalyticSystem::<f64>::Harmonic { omega: 1.0 }, AnalyticSystem::PoschlTeller { s: 4 }] {
        let s2 = sys;
        let s3 = sys;
        let grad_v = move |x: &[f64]| {
            let mut g = vec![0.0];
            s2.ground_log_gradient(x, &mut g);
            vec![-g[0]]
        };
        let lap_v = move |x: &[f64]| -s3.ground_log_laplacian(x);
        let w = sde_to_schrodinger_potential(grad_v, lap_v, 2.0);
        for i in 0..30 {
            let x = -3.0 + 0.2 * i as f64;
            let shifted = sys.potential(&[x]) - sys.ground_energy();
            assert!((w(&[x]) - shifted).abs() < 1e-8, "{} at {x}", sys.name());
        }
        for l in 0..3 {
            let lam = sys.generator_eigenvalue(l).unwrap();
            let e = energy_from_generator_eigenvalue(lam, sys.ground_energy());
            assert!((e - sys.energy(l).unwrap()).abs() < 1e-12);
        }
    }
}

#[test]
fn qho_generator_eigenfunctions_are_hermite_polynomials() {
    // L f = −x f' + ½ f'' with f = He_ℓ(√2 x)-type ratios ψ_ℓ/ψ_0 has eigenvalue −ℓ
    let qho = AnalyticSystem::<f64>::Harmonic { omega: 1.0 };
    let h = 1e-4;
    for l in 0..4 {
        let f = |x: f64| qho.eigenfunction(l, &[x]).unwrap() / qho.eigenfunction(0, &[x]).unwrap();
        for i in 0..21 {
            let x = -2.0 + 0.2 * i as f64;
            let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
            let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
            let lf = -x * d1 + 0.5 * d2;
            let lam = qho.generator_eigenvalue(l).unwrap();
            assert!((lf - lam * f(x)).abs() < 1e-4 * (1.0 + f(x).abs()), "ℓ={l} x={x}");
        }
    }
}
