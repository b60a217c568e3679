use std::sync::Arc;

use koopq_core::dictionary::Dictionary;
use koopq_core::disco::{
    build_stabilized_family, compute_value_field, optimal_policy, predict_observables, solve_ocp, train_surrogate,
    BilinearSurrogate, ControlSignal, ObjectiveSpec, OcpSettings,
};
use koopq_core::sde::simulate_ensemble;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn qho_surrogate() -> BilinearSurrogate<f64> {
    let fam = build_stabilized_family::<f64>(1).unwrap();
    train_surrogate(&fam, Arc::new(Dictionary::monomials(1, 3)), 30_000, &[-3.0], &[3.0], 42).unwrap()
}

fn ou_moments(x0: f64, mu: f64, s: f64) -> (f64, f64) {
    let m = mu + (x0 - mu) * (-s).exp();
    (m, m * m + 0.5 * (1.0 - (-2.0 * s).exp()))
}

#[test]
fn bilinear_prediction_equals_closed_form_moments() {
    let s = qho_surrogate();
    let c = ControlSignal::new(vec![0.0, 0.7, 1.5], DMatrix::from_row_slice(2, 1, &[2.0, -1.0])).unwrap();
    let p = predict_observables(&s, &s.lift(&[0.3]).unwrap(), &c, 1e-3).unwrap();
    // piecewise OU with means 2 then −1: propagate moments through both pieces
    let (m1, q1) = ou_moments(0.3, 2.0, 0.7);
    let var1 = q1 - m1 * m1;
    let e = (-0.8f64).exp();
    let m2 = -1.0 + (m1 + 1.0) * e;
    let q2 = m2 * m2 + var1 * e * e + 0.5 * (1.0 - e * e);
    let z = p.final_state();
    assert!((z[1] - m2).abs() < 1e-8, "{} vs {m2}", z[1]);
    assert!((z[2] - q2).abs() < 1e-8, "{} vs {q2}", z[2]);
}

#[test]
fn surrogate_semigroup_consistency() {
    let s = qho_surrogate();
    let z0 = s.lift(&[-0.8]).unwrap();
    let vals = DMatrix::from_row_slice(3, 1, &[0.5, -2.0, 1.0]);
    let whole = ControlSignal::new(vec![0.0, 0.4, 0.9, 1.3], vals.clone()).unwrap();
    let first = ControlSignal::new(vec![0.0, 0.4, 0.9], vals.rows(0, 2).into_owned()).unwrap();
    let second = ControlSignal::new(vec![0.9, 1.3], vals.rows(2, 1).into_owned()).unwrap();
    let a = predict_observables(&s, &z0, &whole, 1e-3).unwrap().final_state();
    let mid = predict_observables(&s, &z0, &first, 1e-3).unwrap().final_state();
    let b = predict_observables(&s, &mid, &second, 1e-3).unwrap().final_state();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-12);
    }
}

#[test]
fn feynman_kac_bound_holds_on_random_cells() {
    let s = qho_surrogate();
    let obj = ObjectiveSpec::qho(&s.dictionary).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let settings = OcpSettings { pieces: 20, ..OcpSettings::default() };
    for _ in 0..20 {
        let x: f64 = rng.random_range(-2.0..2.0);
        let tau: f64 = rng.random_range(0.0..1.0);
        let sol = solve_ocp(&s, &obj, &[x], tau, 1.0, &settings).unwrap();
        let bound = 0.5 * (x * x + (1.0 - tau));
        assert!(sol.value >= bound - 1e-3, "x={x} τ={tau}: {} < {bound}", sol.value);
        assert!(sol.history.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn field_policy_matches_analytic_feedback() {
    let s = qho_surrogate();
    let obj = ObjectiveSpec::qho(&s.dictionary).unwrap();
    let xs: Vec<f64> = (0..41).map(|i| -2.0 + 0.1 * i as f64).collect();
    let points = DMatrix::from_row_slice(1, xs.len(), &xs);
    let settings = OcpSettings { pieces: 10, ..OcpSettings::default() };
    let field = compute_value_field(&s, &obj, &points, &[0.0, 0.5], 1.0, &settings).unwrap();
    let policy = optimal_policy(&field).unwrap();
    for (i, &x) in xs.iter().enumerate() {
        for k in 0..2 {
            assert!((policy.values[(i, k)] - x).abs() < 5e-2, "x={x}: {}", policy.values[(i, k)]);
        }
    }
}

#[test]
fn controlled_sde_matches_surrogate_under_piecewise_control() {
    let fam = build_stabilized_family::<f64>(1).unwrap();
    let s = qho_surrogate();
    let c = ControlSignal::new(vec![0.0, 0.5, 1.0], DMatrix::from_row_slice(2, 1, &[1.5, -0.5])).unwrap();
    let spec = fam.controlled_system(&c).unwrap();
    let init = DMatrix::from_element(20_000, 1, 0.5);
    let ens = simulate_ensemble(&spec, &init, 0.0, 1.0, 1e-3, 4).unwrap();
    let fin = ens.final_states();
    let mean = fin.iter().sum::<f64>() / fin.len() as f64;
    let z = predict_observables(&s, &s.lift(&[0.5]).unwrap(), &c, 1e-3).unwrap().final_state();
    assert!((mean - z[1]).abs() < 0.03, "{mean} vs {}", z[1]);
}

#[test]
fn hydrogen_uncontrolled_polynomial_terms_match_monte_carlo() {
    // the second-moment and mean terms of the objective are exact for the
    // polynomial block; compare them against Euler–Maruyama averages
    let fam = build_stabilized_family::<f64>(3).unwrap();
    let dict = Arc::new(Dictionary::hydrogen_composite(2, None, None).unwrap());
    let s = train_surrogate(&fam, dict.clone(), 30_000, &[-3.0; 3], &[3.0; 3], 3).unwrap();
    let c = ControlSignal::zeros(0.0, 1.0, 1, 3).unwrap();
    let z = predict_observables(&s, &s.lift(&[2.0, 0.0, 0.0]).unwrap(), &c, 1e-3).unwrap().final_state();
    let spec = fam.system(0).unwrap();
    let init = DMatrix::from_fn(10_000, 3, |_, j| if j == 0 { 2.0 } else { 0.0 });
    let ens = simulate_ensemble(&spec, &init, 0.0, 1.0, 1e-3, 8).unwrap();
    let fin = ens.final_states();
    let n = fin.ncols() as f64;
    let i2 = dict.indices("I2").unwrap();
    let i1 = dict.indices("I1").unwrap();
    for d in 0..3 {
        let xs: Vec<f64> = fin.row(d).iter().copied().collect();
        let m = xs.iter().sum::<f64>() / n;
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let q = sq.iter().sum::<f64>() / n;
        let sd_m = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt() / n.sqrt();
        let sd_q = (sq.iter().map(|x| (x - q).powi(2)).sum::<f64>() / n).sqrt() / n.sqrt();
        assert!((z[i1[d]] - m).abs() < 3.0 * sd_m + 1e-3, "mean {d}");
        assert!((z[i2[d]] - q).abs() < 3.0 * sd_q + 1e-3, "second moment {d}");
    }
}
