use koopq_core::quantum::AnalyticSystem;
use koopq_core::sde::{sample_metropolis_hastings, simulate_ensemble, DensitySpec, DriftDiffusionSpec};
use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn metropolis_hastings_passes_kolmogorov_smirnov_against_ground_density() {
    // |ψ₀|² of the unit oscillator is N(0, ½)
    let qho = AnalyticSystem::<f64>::Harmonic { omega: 1.0 };
    let density = DensitySpec::new(vec![0.0], move |x: &[f64]| 2.0 * qho.ground_log_amplitude(x)).with_proposal_stddev(1.0);
    let out = sample_metropolis_hastings(&density, 4000, 2000, 20, 17).unwrap();
    let mut xs: Vec<f64> = out.samples.column(0).iter().copied().collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let normal = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value of the one-sample KS statistic
    assert!(d < 1.63 / n.sqrt(), "KS statistic {d}");
    assert!(out.acceptance_rate > 0.2 && out.acceptance_rate < 0.9);
}

#[test]
fn euler_maruyama_weak_error_shrinks_with_step() {
    // dX = −X dt + dB from x₀ = 1: E[X_1] = e^{−1}, E[X_1²] = e^{−2} + ½(1 − e^{−2})
    let ou = DriftDiffusionSpec::new(1, 1.0, |x: &[f64], _t, out: &mut [f64]| out[0] = -x[0]).unwrap();
    let init = DMatrix::from_element(100_000, 1, 1.0);
    let exact2 = (-2.0f64).exp() + 0.5 * (1.0 - (-2.0f64).exp());
    let mut errs = vec![];
    for h in [0.1, 0.0125] {
        let ens = simulate_ensemble(&ou, &init, 0.0, 1.0, h, 5).unwrap();
        let fin = ens.final_states();
        let m2 = fin.iter().map(|x| x * x).sum::<f64>() / fin.len() as f64;
        errs.push((m2 - exact2).abs());
        let m1 = fin.iter().sum::<f64>() / fin.len() as f64;
        assert!((m1 - (-1.0f64).exp()).abs() < 0.025);
    }
    // first-order weak bias at h = 0.1 is ≈ 0.02; the smaller step removes most of it
    assert!(errs[1] < errs[0], "{errs:?}");
    assert!(errs[1] < 0.008);
}

#[test]
fn ground_state_process_preserves_its_density() {
    let qho = AnalyticSystem::<f64>::Harmonic { omega: 1.0 };
    let spec = qho.to_sde();
    let density = DensitySpec::new(vec![0.0], move |x: &[f64]| 2.0 * qho.ground_log_amplitude(x));
    let init = sample_metropolis_hastings(&density, 5000, 1000, 10, 3).unwrap().samples;
    let ens = simulate_ensemble(&spec, &init, 0.0, 2.0, 1e-3, 9).unwrap();
    let fin = ens.final_states();
    let var = fin.iter().map(|x| x * x).sum::<f64>() / fin.len() as f64;
    assert!((var - 0.5).abs() < 0.04, "variance {var}");
}
