//! Stochastic simulation of a benchmark process started from its own
//! density, with histogram checks against `|ψ(x, t)|²`.

use koopq_core::quantum::{coherent_state, nelson_velocities, superposition, AnalyticSystem, WaveFunctionRS};
use koopq_core::sde::{sample_metropolis_hastings, simulate_ensemble_with, DensitySpec, McmcSamples, SimulationOptions};
use koopq_core::DriftDiffusion;
use serde::{Deserialize, Serialize};

use super::{put, Outcome};
use crate::error::{CliError, Result};
use crate::report::{Check, Table};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Registry name: qho, box, poschl-teller, hydrogen, coherent or
    /// superposition.
    pub system: String,
    pub particles: usize,
    pub t_end: f64,
    pub step: f64,
    /// Times at which histograms are compared with the exact density.
    pub report_times: Vec<f64>,
    pub bins: usize,
    /// Histogram range; the radius range for three-dimensional systems.
    pub range: [f64; 2],
    /// Coherent-state displacement.
    pub x0: f64,
    pub omega: f64,
    pub burn_in: usize,
    pub thinning: usize,
    pub proposal_stddev: f64,
    /// Largest accepted total-variation distance between histogram and
    /// density.
    pub tolerance: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            system: "superposition".into(),
            particles: 10_000,
            t_end: 2.0 * std::f64::consts::PI,
            step: 1e-3,
            report_times: vec![0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::PI, 2.0 * std::f64::consts::PI],
            bins: 60,
            range: [-5.0, 5.0],
            x0: 2.0,
            omega: 1.0,
            burn_in: 2000,
            thinning: 20,
            proposal_stddev: 1.0,
            tolerance: 0.1,
        }
    }
}

/// `ψ₂ + ½ψ_c` for the oscillator with frequency `omega`; the relative
/// weight is what matters for the induced process, so no global
/// normalization is applied.
pub fn superposition_state(omega: f64, x0: f64) -> Result<WaveFunctionRS<f64>> {
    let qho = AnalyticSystem::Harmonic { omega };
    let psi2 = qho.eigenstate(2)?;
    let coherent = coherent_state(omega, x0).scaled(0.5)?;
    Ok(superposition(&psi2, &coherent)?)
}

/// Wave function and the process whose law is `|ψ|²`.
pub fn system_process(p: &Params) -> Result<(WaveFunctionRS<f64>, DriftDiffusion)> {
    match p.system.as_str() {
        "coherent" => {
            let w = coherent_state(p.omega, p.x0);
            let sde = nelson_velocities(&w).to_sde();
            Ok((w, sde))
        }
        "superposition" => {
            let w = superposition_state(p.omega, p.x0)?;
            let sde = nelson_velocities(&w).to_sde();
            Ok((w, sde))
        }
        name => {
            let sys = match AnalyticSystem::by_name(name) {
                Some(AnalyticSystem::Harmonic { .. }) => AnalyticSystem::Harmonic { omega: p.omega },
                Some(s) => s,
                None => return Err(CliError::Config(format!("unknown system `{name}`"))),
            };
            Ok((sys.ground_state(), sys.to_sde()))
        }
    }
}

fn start_point(w: &WaveFunctionRS<f64>) -> Vec<f64> {
    // a point of positive density: the best of a few candidates
    let d = w.dim();
    let candidates = [0.5, 1.0, 0.25, 1.5, -0.5, 2.0];
    let mut best = vec![candidates[0]; d];
    for c in candidates {
        let x = vec![c; d];
        if w.density(&x, 0.0) > w.density(&best, 0.0) {
            best = x;
        }
    }
    best
}

/// Draws `n` samples of `|ψ(·, 0)|²` with random-walk Metropolis–Hastings.
pub fn sample_initial(w: &WaveFunctionRS<f64>, n: usize, p: &Params, seed: u64) -> Result<McmcSamples<f64>> {
    let w2 = w.clone();
    let density = DensitySpec::new(start_point(w), move |x: &[f64]| {
        let rho = w2.density(x, 0.0);
        if rho > 0.0 {
            rho.ln()
        } else {
            f64::NEG_INFINITY
        }
    })
    .with_proposal_stddev(p.proposal_stddev);
    Ok(sample_metropolis_hastings(&density, n, p.burn_in, p.thinning, seed)?)
}

/// Histogram of one time slice next to the exact density.
#[derive(Clone, Debug)]
pub struct DensitySlice {
    pub time: f64,
    pub centers: Vec<f64>,
    pub empirical: Vec<f64>,
    pub exact: Vec<f64>,
    /// `½ Σ |p̂ − p| Δ` over the histogram range.
    pub total_variation: f64,
}

#[derive(Clone, Debug)]
pub struct SimulationOutput {
    pub acceptance_rate: f64,
    pub slices: Vec<DensitySlice>,
}

pub fn run(p: &Params, seed: u64) -> Result<SimulationOutput> {
    if p.bins == 0 || !(p.range[1] > p.range[0]) {
        return Err(CliError::Config("histogram needs bins > 0 and an increasing range".into()));
    }
    let (w, sde) = system_process(p)?;
    let d = w.dim();
    let mcmc = sample_initial(&w, p.particles, p, seed)?;
    // the horizon is split into a whole number of recorded blocks, so the
    // step actually used is at most `p.step`
    let record_every = 10usize;
    let blocks = (p.t_end / (p.step * record_every as f64)).ceil().max(1.0) as usize;
    let h = p.t_end / (blocks * record_every) as f64;
    let ens = simulate_ensemble_with(
        &sde,
        &mcmc.samples,
        0.0,
        p.t_end,
        h,
        seed.wrapping_add(1),
        SimulationOptions { record_every },
    )?;
    let (lo, hi) = (p.range[0], p.range[1]);
    let width = (hi - lo) / p.bins as f64;
    let centers: Vec<f64> = (0..p.bins).map(|b| lo + (b as f64 + 0.5) * width).collect();
    let radial = d > 1;
    let mut slices = vec![];
    for &t in &p.report_times {
        let k = ens.times.iter().enumerate().min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs())).map_or(0, |x| x.0);
        let time = ens.times[k];
        let mut counts = vec![0.0; p.bins];
        for j in 0..ens.n_traj {
            let x = ens.state(j, k);
            let v = if radial { x.iter().map(|c| c * c).sum::<f64>().sqrt() } else { x[0] };
            if v >= lo && v < hi {
                counts[((v - lo) / width) as usize] += 1.0;
            }
        }
        let empirical: Vec<f64> = counts.iter().map(|c| c / (ens.n_traj as f64 * width)).collect();
        // exact density on a fine sub-grid, normalized over the range
        let sub = 20;
        let fine = |b: usize, s: usize| lo + (b as f64 + (s as f64 + 0.5) / sub as f64) * width;
        let value = |v: f64| {
            if radial {
                let mut x = vec![0.0; d];
                x[0] = v;
                v.powi(d as i32 - 1) * w.density(&x, time)
            } else {
                w.density(&[v], time)
            }
        };
        let mut exact: Vec<f64> = (0..p.bins).map(|b| (0..sub).map(|s| value(fine(b, s))).sum::<f64>() / sub as f64).collect();
        let mass: f64 = exact.iter().sum::<f64>() * width;
        exact.iter_mut().for_each(|e| *e /= mass);
        let total_variation = 0.5 * empirical.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>() * width;
        slices.push(DensitySlice { time, centers: centers.clone(), empirical, exact, total_variation });
    }
    Ok(SimulationOutput { acceptance_rate: mcmc.acceptance_rate, slices })
}

pub fn outcome(p: &Params, seed: u64) -> Result<Outcome> {
    let out = run(p, seed)?;
    let mut metrics = serde_json::Map::new();
    put(&mut metrics, "acceptance_rate", out.acceptance_rate);
    put(&mut metrics, "times", out.slices.iter().map(|s| s.time).collect::<Vec<_>>());
    let tv: Vec<f64> = out.slices.iter().map(|s| s.total_variation).collect();
    put(&mut metrics, "total_variation", &tv);
    let worst = tv.iter().copied().fold(0.0, f64::max);
    let mut table = Table::new("densities", &["t", "x", "histogram", "exact"]);
    for s in &out.slices {
        for i in 0..s.centers.len() {
            table.push(vec![s.time, s.centers[i], s.empirical[i], s.exact[i]]);
        }
    }
    Ok(Outcome {
        metrics,
        checks: vec![Check::at_most("largest total-variation distance", worst, p.tolerance)],
        tables: vec![table],
    })
}
