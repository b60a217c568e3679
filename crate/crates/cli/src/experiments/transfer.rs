//! Energies of the Pöschl–Teller well from trajectory data (EDMD) and from
//! the generator (gEDMD) with Gaussian dictionaries.

use koopq_core::disco::uniform_box_samples;
use koopq_core::estimators::{
    edmd_fit, eigenfunctions_in_range, eigfun_eval, excited_states_from_ground, gedmd_from_covariances, generator_eigenvalue_from_koopman,
    EigenMeta, EigenResult, OperatorKind, SortOrder,
};
use koopq_core::quantum::{energy_from_generator_eigenvalue, AnalyticSystem};
use koopq_core::sde::{sample_metropolis_hastings, simulate_ensemble_with, DensitySpec, SimulationOptions};
use koopq_core::Dictionary;
use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use super::{put, Outcome};
use crate::error::{CliError, Result};
use crate::report::{Check, Table};

/// Distribution of the initial states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Uniform on `[lower, upper]`.
    Uniform,
    /// The invariant density `ψ₀²`, drawn by Metropolis–Hastings.
    Ground,
}

fn initial_states(kind: Sampling, lower: f64, upper: f64, m: usize, seed: u64) -> Result<DMatrix<f64>> {
    Ok(match kind {
        Sampling::Uniform => uniform_box_samples(&[lower], &[upper], m, seed),
        Sampling::Ground => {
            let sys = system();
            let density = DensitySpec::new(vec![0.0], move |x: &[f64]| 2.0 * sys.ground_log_amplitude(x)).with_proposal_stddev(0.5);
            sample_metropolis_hastings(&density, m, 1000, 10, seed)?.samples.transpose()
        }
    })
}

/// Weights attached to the samples in the least-squares problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Plain sample averages.
    None,
    /// Importance weights `ψ₀²(x)` relative to the sampling density, which
    /// turns the regression into a Galerkin projection in the space weighted
    /// by the invariant density; the generator is self-adjoint there.
    Invariant,
}

/// Scales sample columns by `ψ₀(x)`, so that covariances carry `ψ₀²(x)`.
/// The sampling density is assumed flat; a density drawn from `ψ₀²` should
/// use [`Weighting::None`].
fn reweight(xs: &DMatrix<f64>, features: &mut [&mut DMatrix<f64>]) {
    let sys = system();
    let w: Vec<f64> = xs.column_iter().map(|c| sys.ground_log_amplitude(&[c[0]]).exp()).collect();
    for f in features.iter_mut() {
        for (c, wc) in w.iter().enumerate() {
            f.column_mut(c).scale_mut(*wc);
        }
    }
}

/// Energies reported for the trajectory-based estimate on the default
/// configuration.
pub const REFERENCE_ENERGIES: [f64; 4] = [-8.0, -4.51, -2.1, -0.39];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdmdParams {
    pub trajectories: usize,
    pub sampling: Sampling,
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
    pub lag: f64,
    /// Consecutive `(x, y)` pairs taken from every trajectory.
    pub pairs_per_trajectory: usize,
    pub weighting: Weighting,
    pub centers: usize,
    pub bandwidth: f64,
    pub states: usize,
    pub truncation: f64,
    pub reference_tolerance: f64,
    pub exact_tolerance: f64,
    /// Points of the grid on which eigenstates are tabulated.
    pub plot_points: usize,
}

impl Default for EdmdParams {
    fn default() -> Self {
        Self {
            trajectories: 10_000,
            sampling: Sampling::Uniform,
            lower: -5.0,
            upper: 5.0,
            step: 1e-3,
            lag: 0.1,
            pairs_per_trajectory: 10,
            weighting: Weighting::Invariant,
            centers: 100,
            bandwidth: 0.5,
            states: 4,
            truncation: 1e-10,
            reference_tolerance: 0.15,
            exact_tolerance: 0.2,
            plot_points: 201,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GedmdParams {
    pub samples: usize,
    pub sampling: Sampling,
    pub weighting: Weighting,
    pub lower: f64,
    pub upper: f64,
    pub centers: usize,
    pub bandwidth: f64,
    pub states: usize,
    pub truncation: f64,
    pub exact_tolerance: f64,
    pub plot_points: usize,
}

impl Default for GedmdParams {
    fn default() -> Self {
        Self {
            samples: 10_000,
            sampling: Sampling::Uniform,
            weighting: Weighting::Invariant,
            lower: -5.0,
            upper: 5.0,
            centers: 100,
            bandwidth: 0.3,
            states: 4,
            truncation: 1e-10,
            exact_tolerance: 0.2,
            plot_points: 201,
        }
    }
}

/// Spectrum and eigenstates common to both estimators.
#[derive(Clone, Debug)]
pub struct SpectrumOutput {
    pub generator: Vec<Complex<f64>>,
    pub energies: Vec<f64>,
    pub exact: Vec<f64>,
    pub grid: Vec<f64>,
    /// `grid × states`, unit sup-norm.
    pub states: DMatrix<f64>,
}

fn system() -> AnalyticSystem<f64> {
    AnalyticSystem::PoschlTeller { s: 4 }
}

fn exact_energies(n: usize) -> Result<Vec<f64>> {
    let sys = system();
    (0..n)
        .map(|l| sys.energy(l).ok_or_else(|| CliError::Config(format!("only {} states are tabulated", l))))
        .collect()
}

fn finish(
    eig: &EigenResult<f64>,
    generator: Vec<Complex<f64>>,
    dict: &Dictionary,
    lower: f64,
    upper: f64,
    plot_points: usize,
) -> Result<SpectrumOutput> {
    let sys = system();
    let e0 = sys.ground_energy();
    let energies: Vec<f64> = generator.iter().map(|l| energy_from_generator_eigenvalue(l.re, e0)).collect();
    let exact = exact_energies(energies.len())?;
    let n = plot_points.max(2);
    let grid: Vec<f64> = (0..n).map(|i| lower + (upper - lower) * i as f64 / (n - 1) as f64).collect();
    let points = DMatrix::from_row_slice(1, n, &grid);
    let eigfuns = eigfun_eval(eig, dict, &points)?;
    let psi0: Vec<f64> = grid.iter().map(|&x| sys.ground_log_amplitude(&[x]).exp()).collect();
    let mut states = excited_states_from_ground(&eigfuns, &psi0, OperatorKind::Koopman)?;
    for mut c in states.column_iter_mut() {
        let sup = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup > 0.0 {
            c.unscale_mut(sup);
        }
    }
    Ok(SpectrumOutput { generator, energies, exact, grid, states })
}

fn equispaced_centers(lower: f64, upper: f64, k: usize) -> DMatrix<f64> {
    let k = k.max(2);
    DMatrix::from_fn(1, k, |_, j| lower + (upper - lower) * j as f64 / (k - 1) as f64)
}

pub fn run_edmd(p: &EdmdParams, seed: u64) -> Result<SpectrumOutput> {
    let x0 = initial_states(p.sampling, p.lower, p.upper, p.trajectories, seed)?;
    let sde = system().to_sde();
    let record_every = (p.lag / p.step).round() as usize;
    if record_every == 0 {
        return Err(CliError::Config("lag must be at least one step".into()));
    }
    let pairs = p.pairs_per_trajectory.max(1);
    let ens = simulate_ensemble_with(
        &sde,
        &x0.transpose(),
        0.0,
        p.lag * pairs as f64,
        p.step,
        seed.wrapping_add(1),
        SimulationOptions { record_every },
    )?;
    let n = ens.n_traj;
    let xs = DMatrix::from_fn(1, n * pairs, |_, c| ens.state(c % n, c / n)[0]);
    let ys = DMatrix::from_fn(1, n * pairs, |_, c| ens.state(c % n, c / n + 1)[0]);
    let dict = Dictionary::gaussians(&equispaced_centers(p.lower, p.upper, p.centers), p.bandwidth)?;
    let mut phi_x = dict.eval_matrix(&xs)?;
    let mut phi_y = dict.eval_matrix(&ys)?;
    if p.weighting == Weighting::Invariant {
        reweight(&xs, &mut [&mut phi_x, &mut phi_y]);
    }
    let k = edmd_fit(&phi_x, &phi_y, OperatorKind::Koopman, p.truncation)?;
    let meta = EigenMeta { method: "edmd".into(), dt: Some(p.lag), truncation: Some(p.truncation), ..Default::default() };
    let mut eig = eigenfunctions_in_range(&k, &phi_x, p.truncation, SortOrder::RealPartDesc, meta)?;
    eig.truncate(p.states);
    let generator =
        eig.values.iter().map(|&mu| generator_eigenvalue_from_koopman(mu, p.lag)).collect::<koopq_core::Result<Vec<_>>>()?;
    finish(&eig, generator, &dict, p.lower, p.upper, p.plot_points)
}

pub fn run_gedmd(p: &GedmdParams, seed: u64) -> Result<SpectrumOutput> {
    let centers = uniform_box_samples(&[p.lower], &[p.upper], p.centers, seed);
    let xs = initial_states(p.sampling, p.lower, p.upper, p.samples, seed.wrapping_add(1))?;
    let dict = Dictionary::gaussians(&centers, p.bandwidth)?;
    let sde = system().to_sde();
    let mut drift = DMatrix::zeros(1, xs.ncols());
    for (c, x) in xs.column_iter().enumerate() {
        drift[(0, c)] = sde.drift(&[x[0]], 0.0)?[0];
    }
    let mut phi = dict.eval_matrix(&xs)?;
    let mut dphi = dict.generator_matrix(&xs, &drift, sde.sigma())?;
    if p.weighting == Weighting::Invariant {
        reweight(&xs, &mut [&mut phi, &mut dphi]);
    }
    let m = xs.ncols() as f64;
    let l = gedmd_from_covariances(&(&phi * phi.transpose() / m), &(&dphi * phi.transpose() / m), p.truncation);
    let meta = EigenMeta { method: "gedmd".into(), truncation: Some(p.truncation), ..Default::default() };
    let mut eig = eigenfunctions_in_range(&l, &phi, p.truncation, SortOrder::RealPartDesc, meta)?;
    eig.truncate(p.states);
    let generator = eig.values.clone();
    finish(&eig, generator, &dict, p.lower, p.upper, p.plot_points)
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn tables(out: &SpectrumOutput) -> Vec<Table> {
    let mut spectrum = Table::new("energies", &["l", "generator_re", "generator_im", "energy", "exact"]);
    for (l, g) in out.generator.iter().enumerate() {
        spectrum.push(vec![l as f64, g.re, g.im, out.energies[l], out.exact[l]]);
    }
    let sys = system();
    let mut header = vec!["x".to_string()];
    for l in 0..out.states.ncols() {
        header.push(format!("estimate{l}"));
        header.push(format!("exact{l}"));
    }
    let mut states = Table { name: "eigenstates".into(), header, rows: vec![] };
    let exact: Vec<Vec<f64>> = (0..out.states.ncols())
        .map(|l| {
            let v: Vec<f64> = out.grid.iter().map(|&x| sys.eigenfunction(l, &[x]).unwrap_or(f64::NAN)).collect();
            let sup = v.iter().fold(0.0f64, |m, y| m.max(y.abs()));
            v.into_iter().map(|y| y / sup).collect()
        })
        .collect();
    for (i, x) in out.grid.iter().enumerate() {
        let mut row = vec![*x];
        for l in 0..out.states.ncols() {
            // eigenfunctions are defined up to sign; align with the exact one
            let dot: f64 = out.states.column(l).iter().zip(&exact[l]).map(|(a, b)| a * b).sum();
            row.push(dot.signum() * out.states[(i, l)]);
            row.push(exact[l][i]);
        }
        states.rows.push(row);
    }
    vec![spectrum, states]
}

fn metrics(out: &SpectrumOutput) -> serde_json::Map<String, serde_json::Value> {
    let mut m = serde_json::Map::new();
    put(&mut m, "generator_re", out.generator.iter().map(|z| z.re).collect::<Vec<_>>());
    put(&mut m, "generator_im", out.generator.iter().map(|z| z.im).collect::<Vec<_>>());
    put(&mut m, "energies", &out.energies);
    put(&mut m, "exact", &out.exact);
    put(&mut m, "max_gap_exact", max_gap(&out.energies, &out.exact));
    m
}

pub fn edmd_outcome(p: &EdmdParams, seed: u64) -> Result<Outcome> {
    let out = run_edmd(p, seed)?;
    let mut metrics = metrics(&out);
    let mut checks = vec![Check::at_most("max gap to exact energies", max_gap(&out.energies, &out.exact), p.exact_tolerance)];
    if out.energies.len() == REFERENCE_ENERGIES.len() {
        let gap = max_gap(&out.energies, &REFERENCE_ENERGIES);
        put(&mut metrics, "max_gap_reference", gap);
        checks.push(Check::at_most("max gap to reference energies", gap, p.reference_tolerance));
    }
    Ok(Outcome { metrics, checks, tables: tables(&out) })
}

pub fn gedmd_outcome(p: &GedmdParams, seed: u64) -> Result<Outcome> {
    let out = run_gedmd(p, seed)?;
    let checks = vec![Check::at_most("max gap to exact energies", max_gap(&out.energies, &out.exact), p.exact_tolerance)];
    Ok(Outcome { metrics: metrics(&out), checks, tables: tables(&out) })
}
