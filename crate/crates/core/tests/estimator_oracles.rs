use koopq_core::dictionary::Dictionary;
use koopq_core::disco::uniform_box_samples;
use koopq_core::estimators::{
    edmd_fit, eigenfunctions_of, gedmd_fit, gedmd_from_covariances, kernel_edmd_fit, EigenMeta, KernelSpec,
    OperatorKind, SortOrder,
};
use koopq_core::linalg::eig_real;
use koopq_core::quantum::AnalyticSystem;
use koopq_core::sde::{sample_metropolis_hastings, simulate_ensemble, DensitySpec, DriftDiffusionSpec};
use nalgebra::DMatrix;

fn ou() -> DriftDiffusionSpec<f64> {
    DriftDiffusionSpec::new(1, 1.0, |x: &[f64], _t, out: &mut [f64]| out[0] = -x[0]).unwrap()
}

fn sorted_real(m: &DMatrix<f64>) -> Vec<f64> {
    let mut e = eig_real(m);
    e.sort_by_key_desc(|z| z.re);
    e.values.iter().map(|z| z.re).collect()
}

#[test]
fn gedmd_recovers_ou_spectrum_from_samples() {
    let xs = uniform_box_samples(&[-3.0], &[3.0], 30_000, 1);
    let dict = Dictionary::monomials(1, 3);
    let l = gedmd_fit(&xs, &dict, &ou(), 1e-10).unwrap();
    for (k, v) in sorted_real(&l).iter().enumerate() {
        assert!((v + k as f64).abs() < 0.05, "eigenvalue {k}: {v}");
    }
}

#[test]
fn gedmd_is_exact_with_analytic_moments() {
    // uniform law on [−3, 3]: E[x^j] = 3^j/(j+1) for even j
    let moment = |j: i32| if j < 0 || j % 2 == 1 { 0.0 } else { 3f64.powi(j) / (j + 1) as f64 };
    let n = 4;
    let c_xx = DMatrix::from_fn(n, n, |i, j| moment((i + j) as i32));
    // L x^i = −i x^i + ½ i(i−1) x^{i−2}
    let c_dx = DMatrix::from_fn(n, n, |i, j| {
        let (i, j) = (i as i32, j as i32);
        -(i as f64) * moment(i + j) + 0.5 * (i * (i - 1)) as f64 * moment(i + j - 2)
    });
    let l = gedmd_from_covariances(&c_xx, &c_dx, 1e-14);
    let exact = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            -(i as f64)
        } else if j + 2 == i {
            0.5 * (i * (i - 1)) as f64
        } else {
            0.0
        }
    });
    assert!((l - &exact).amax() < 1e-10);
    for (k, v) in sorted_real(&exact).iter().enumerate() {
        assert!((v + k as f64).abs() < 1e-10);
    }
}

#[test]
fn monomials_are_closed_under_the_ou_generator() {
    let xs = uniform_box_samples(&[-2.0], &[2.0], 200, 4);
    let dict = Dictionary::monomials(1, 5);
    let phi = dict.eval_matrix(&xs).unwrap();
    let drift = xs.map(|x| -x);
    let dphi = dict.generator_matrix(&xs, &drift, 1.0).unwrap();
    let l = gedmd_fit(&xs, &dict, &ou(), 1e-12).unwrap();
    assert!((&l * &phi - dphi).amax() < 1e-8);
}

#[test]
fn dictionary_derivatives_match_finite_differences() {
    let centers = DMatrix::from_row_slice(3, 2, &[0.1, -0.4, 0.5, 0.2, -0.3, 0.7]);
    let dicts = [
        Dictionary::gaussians(&centers, 0.6).unwrap(),
        Dictionary::<f64>::monomials(3, 3),
        Dictionary::hydrogen_composite(2, Some(1), Some(1)).unwrap(),
    ];
    let x = [0.4f64, -0.3, 0.8];
    let h = 1e-4;
    for dict in &dicts {
        let g = dict.grad(&x).unwrap();
        let lap = dict.laplacian(&x).unwrap();
        let f0 = dict.eval(&x).unwrap();
        let mut fd_lap = -6.0 * &f0;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let (fp, fm) = (dict.eval(&xp).unwrap(), dict.eval(&xm).unwrap());
            let fd = (&fp - &fm) / (2.0 * h);
            for k in 0..dict.len() {
                assert!((fd[k] - g[(k, i)]).abs() < 1e-6, "{} d/dx{i}", dict.labels()[k]);
            }
            fd_lap += fp + fm;
        }
        fd_lap /= h * h;
        for k in 0..dict.len() {
            assert!((fd_lap[k] - lap[k]).abs() < 1e-4, "{} laplacian", dict.labels()[k]);
        }
    }
}

#[test]
fn kernel_edmd_spectrum_lies_in_the_unit_disc() {
    let init = uniform_box_samples(&[-2.0], &[2.0], 300, 8).transpose();
    let ens = simulate_ensemble(&ou(), &init, 0.0, 0.1, 1e-3, 2).unwrap();
    let x = ens.snapshot(0);
    let y = ens.final_states();
    let k = KernelSpec::Gaussian { bandwidth: 0.5 };
    let g_xx = k.gram(&x, &x);
    let g_yx = k.gram(&y, &x);
    let r = kernel_edmd_fit(&g_xx, &g_yx, 1e-4).unwrap();
    let lead = r.values[0].norm();
    assert!(lead <= 1.05 && lead > 0.95, "leading modulus {lead}");
    assert!(r.values.iter().all(|z| z.norm() <= lead + 1e-12));
}

#[test]
fn reversible_process_has_matching_koopman_and_transfer_spectra() {
    let pt = AnalyticSystem::<f64>::PoschlTeller { s: 4 };
    let density = DensitySpec::new(vec![0.0], move |x: &[f64]| 2.0 * pt.ground_log_amplitude(x)).with_proposal_stddev(0.8);
    let init = sample_metropolis_hastings(&density, 3000, 1000, 10, 21).unwrap().samples;
    let ens = simulate_ensemble(&pt.to_sde(), &init, 0.0, 0.1, 1e-3, 22).unwrap();
    let x = ens.snapshot(0);
    let y = ens.final_states();
    let centers = DMatrix::from_fn(1, 15, |_, j| -2.1 + 0.3 * j as f64);
    let dict = Dictionary::gaussians(&centers, 0.5).unwrap();
    let (px, py) = (dict.eval_matrix(&x).unwrap(), dict.eval_matrix(&y).unwrap());
    let k = edmd_fit(&px, &py, OperatorKind::Koopman, 1e-10).unwrap();
    let p = edmd_fit(&px, &py, OperatorKind::PerronFrobenius, 1e-10).unwrap();
    let ek = eigenfunctions_of(&k, SortOrder::RealPartDesc, 15, EigenMeta::default());
    let ep = eigenfunctions_of(&p, SortOrder::RealPartDesc, 15, EigenMeta::default());
    for l in 0..3 {
        assert!((ek.values[l].re - ep.values[l].re).abs() < 0.03, "{l}: {} vs {}", ek.values[l], ep.values[l]);
    }
    assert!((ek.values[0].re - 1.0).abs() < 0.01);
}
