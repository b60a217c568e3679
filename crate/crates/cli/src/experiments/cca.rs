//! Finite-time coherent sets of the oscillator superposition `ψ₂ + ½ψ_c`
//! from kernel CCA on Nelson trajectories.
//!
//! At `t = 0` the wave function is real with two nodes, which the process
//! cannot cross; the nodes dissolve as the phase evolves, so over short lags
//! the nodal domain a particle starts in labels its coherent set. The CCA
//! clustering is scored against that labelling up to a permutation.

use koopq_core::estimators::{cluster_coherent_sets, kernel_cca, KernelSpec};
use koopq_core::quantum::nelson_velocities;
use koopq_core::sde::{simulate_ensemble_with, SimulationOptions};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::simulate::{sample_initial, superposition_state, Params as SimParams};
use super::{put, Outcome};
use crate::error::{CliError, Result};
use crate::report::{Check, Table};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub particles: usize,
    pub omega: f64,
    pub x0: f64,
    pub t_end: f64,
    pub step: f64,
    /// Lag of the CCA fit used for clustering.
    pub lag: f64,
    /// Number of trajectories entering the Gram matrices.
    pub subsample: usize,
    pub bandwidth: f64,
    /// Tikhonov regularization of the kernel CCA.
    pub eps: f64,
    pub sets: usize,
    /// Number of horizons `t` at which `κ(t)` is tabulated.
    pub coherence_times: usize,
    /// Trajectories written to the plot table.
    pub plotted_trajectories: usize,
    pub min_agreement: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            particles: 10_000,
            omega: 1.0,
            x0: 2.0,
            t_end: 2.0 * std::f64::consts::PI,
            step: 1e-3,
            lag: std::f64::consts::FRAC_PI_4,
            subsample: 1000,
            bandwidth: 0.5,
            eps: 1e-3,
            sets: 3,
            coherence_times: 8,
            plotted_trajectories: 200,
            min_agreement: 0.9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CcaOutput {
    pub nodes: Vec<f64>,
    pub correlations: Vec<f64>,
    pub labels: Vec<usize>,
    pub oracle: Vec<usize>,
    pub agreement: f64,
    /// `(t, κ₁(t), κ₂(t), …)`.
    pub coherence: Vec<(f64, Vec<f64>)>,
    /// Recorded times and the first trajectories, `times × plotted`.
    pub times: Vec<f64>,
    pub paths: DMatrix<f64>,
    pub plotted_labels: Vec<usize>,
}

/// Sign changes of `Re ψ(·, 0)` on a fine grid, refined by bisection.
pub fn initial_nodes(omega: f64, x0: f64) -> Result<Vec<f64>> {
    let w = superposition_state(omega, x0)?;
    let f = |x: f64| w.value(&[x], 0.0).re;
    let n = 4000;
    let (lo, hi) = (-8.0, 8.0);
    let mut nodes = vec![];
    let mut prev = (lo, f(lo));
    for i in 1..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let v = f(x);
        if prev.1.signum() != v.signum() && prev.1 != 0.0 && v != 0.0 {
            let (mut a, mut b) = (prev.0, x);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if f(m).signum() == f(a).signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            nodes.push(0.5 * (a + b));
        }
        prev = (x, v);
    }
    Ok(nodes)
}

/// Fraction of equal labels under the best bijection between label sets.
pub fn agreement(a: &[usize], b: &[usize], k: usize) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let mut counts = vec![vec![0usize; k]; k];
    for (&x, &y) in a.iter().zip(b) {
        if x < k && y < k {
            counts[x][y] += 1;
        }
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        best = best.max((0..k).map(|i| counts[i][p[i]]).sum::<usize>());
    });
    best as f64 / a.len() as f64
}

fn permute(p: &mut [usize], i: usize, visit: &mut dyn FnMut(&[usize])) {
    if i == p.len() {
        visit(p);
        return;
    }
    for j in i..p.len() {
        p.swap(i, j);
        permute(p, i + 1, visit);
        p.swap(i, j);
    }
}

pub fn run(p: &Params, seed: u64) -> Result<CcaOutput> {
    if p.subsample == 0 || p.subsample > p.particles {
        return Err(CliError::Config("subsample must lie in 1..=particles".into()));
    }
    let w = superposition_state(p.omega, p.x0)?;
    let sde = nelson_velocities(&w).to_sde();
    let sim = SimParams { omega: p.omega, x0: p.x0, ..SimParams::default() };
    let init = sample_initial(&w, p.particles, &sim, seed)?;
    // the horizon is cut into `coherence_times` recorded blocks of whole
    // integrator steps no longer than `p.step`
    let horizons = p.coherence_times.max(1);
    let block = p.t_end / horizons as f64;
    let record_every = (block / p.step).ceil().max(1.0) as usize;
    let h = block / record_every as f64;
    let lag_blocks = p.lag / block;
    if (lag_blocks - lag_blocks.round()).abs() > 1e-9 || lag_blocks.round() < 1.0 || lag_blocks.round() as usize > horizons {
        return Err(CliError::Config("lag must be a positive multiple of t_end / coherence_times".into()));
    }
    let lag_index = lag_blocks.round() as usize;
    let ens = simulate_ensemble_with(
        &sde,
        &init.samples,
        0.0,
        p.t_end,
        h,
        seed.wrapping_add(1),
        SimulationOptions { record_every },
    )?;
    // evenly spaced subsample of the ensemble
    let idx: Vec<usize> = (0..p.subsample).map(|i| i * p.particles / p.subsample).collect();
    let at = |k: usize| DMatrix::from_fn(1, idx.len(), |_, j| ens.state(idx[j], k)[0]);
    let kernel = KernelSpec::Gaussian { bandwidth: p.bandwidth };
    let x = at(0);
    let g_x = kernel.gram(&x, &x);
    let fit = |k: usize| -> Result<_> {
        let y = at(k);
        Ok(kernel_cca(&g_x, &kernel.gram(&y, &y), p.eps, p.sets)?)
    };
    let main = fit(lag_index)?;
    let labels = cluster_coherent_sets(&main.functions, p.sets, seed);

    let nodes = initial_nodes(p.omega, p.x0)?;
    let region = |v: f64| nodes.iter().filter(|&&n| n < v).count();
    let oracle: Vec<usize> = idx.iter().map(|&j| region(ens.state(j, 0)[0])).collect();
    let agreement = agreement(&labels, &oracle, p.sets.max(nodes.len() + 1));

    let mut coherence = vec![];
    for k in 1..ens.n_steps {
        coherence.push((ens.times[k], fit(k)?.values));
    }
    let plotted = p.plotted_trajectories.min(idx.len());
    let paths = DMatrix::from_fn(ens.n_steps, plotted, |k, j| ens.state(idx[j], k)[0]);
    Ok(CcaOutput {
        nodes,
        correlations: main.values,
        plotted_labels: labels[..plotted].to_vec(),
        labels,
        oracle,
        agreement,
        coherence,
        times: ens.times.clone(),
        paths,
    })
}

pub fn outcome(p: &Params, seed: u64) -> Result<Outcome> {
    let out = run(p, seed)?;
    let mut metrics = serde_json::Map::new();
    put(&mut metrics, "nodes", &out.nodes);
    put(&mut metrics, "correlations", &out.correlations);
    put(&mut metrics, "agreement", out.agreement);
    let sizes: Vec<usize> = (0..p.sets).map(|s| out.labels.iter().filter(|&&l| l == s).count()).collect();
    put(&mut metrics, "set_sizes", &sizes);

    let mut header = vec!["t"];
    let names: Vec<String> = (1..=p.sets).map(|i| format!("kappa{i}")).collect();
    header.extend(names.iter().map(String::as_str));
    let mut coherence = Table::new("coherence", &header);
    for (t, v) in &out.coherence {
        let mut row = vec![*t];
        row.extend((0..p.sets).map(|i| v.get(i).copied().unwrap_or(f64::NAN)));
        coherence.push(row);
    }
    let mut paths = Table::new("trajectories", &["id", "set", "t", "x"]);
    for j in 0..out.paths.ncols() {
        for (k, t) in out.times.iter().enumerate() {
            paths.push(vec![j as f64, out.plotted_labels[j] as f64, *t, out.paths[(k, j)]]);
        }
    }
    Ok(Outcome {
        metrics,
        checks: vec![Check::at_least("label agreement with nodal domains", out.agreement, p.min_agreement)],
        tables: vec![coherence, paths],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agreement_ignores_label_names() {
        assert_eq!(agreement(&[0, 0, 1, 2], &[2, 2, 0, 1], 3), 1.0);
        assert_eq!(agreement(&[0, 1, 1, 1], &[0, 0, 1, 1], 2), 0.75);
    }

    #[test]
    fn superposition_has_two_initial_nodes() {
        let n = initial_nodes(1.0, 2.0).unwrap();
        assert_eq!(n.len(), 2);
        assert!(n[0] < 0.0 && n[1] > 0.0);
    }
}
