//! Dictionary selection for the hydrogen surrogate: every combination of
//! polynomial degree and optional `1/r`, `r` blocks is trained on several
//! sample sets and scored by how well it predicts the expectations entering
//! the control objective (`E[1/‖X‖]`, `E[‖X‖]`, `Σ E[X_j²]`, `E[X]`) under
//! random sinusoidal controls. Configurations without a `1/r` or `r` block
//! read those terms off the moment closure.

use std::sync::Arc;

use koopq_core::dictionary::Dictionary;
use koopq_core::disco::{
    build_stabilized_family, predict_observables, train_surrogate, ControlSignal, MomentClosure, ObjectiveSpec,
};
use koopq_core::sde::{simulate_ensemble_with, SimulationOptions};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::disco::ball_points;
use super::{put, Outcome};
use crate::error::{CliError, Result};
use crate::report::{Check, Table};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub degrees: Vec<u32>,
    /// Degrees of the `/r` block; a negative entry stands for "absent".
    pub inverse_degrees: Vec<i32>,
    /// Degrees of the `·r` block; a negative entry stands for "absent".
    pub norm_degrees: Vec<i32>,
    pub realizations: usize,
    pub samples: usize,
    pub box_half_width: f64,
    pub test_controls: usize,
    pub trajectories: usize,
    pub start_radius: f64,
    pub horizon: f64,
    pub control_pieces: usize,
    pub amplitude_max: f64,
    pub frequency_range: [f64; 2],
    pub sde_step: f64,
    pub prediction_step: f64,
    pub closure: MomentClosure,
    /// The configuration expected to rank near the top.
    pub expected: [i32; 3],
    pub max_rank: usize,
}

impl Default for Params {
    fn default() -> Self {
        let tau = 2.0 * std::f64::consts::PI;
        Self {
            degrees: vec![2, 3],
            inverse_degrees: vec![-1, 0, 1],
            norm_degrees: vec![-1, 0, 1],
            realizations: 10,
            samples: 30_000,
            box_half_width: 3.0,
            test_controls: 10,
            trajectories: 1000,
            start_radius: 2.0,
            horizon: 1.0,
            control_pieces: 100,
            amplitude_max: 5.0,
            frequency_range: [tau, 3.0 * tau],
            sde_step: 1e-3,
            prediction_step: 1e-2,
            closure: MomentClosure::Gaussian,
            expected: [2, -1, -1],
            max_rank: 2,
        }
    }
}

/// One dictionary configuration `(p, p_inv, p_norm)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Config {
    pub degree: u32,
    pub inverse: Option<u32>,
    pub norm: Option<u32>,
}

impl Config {
    fn from_raw(p: u32, inv: i32, norm: i32) -> Self {
        let opt = |v: i32| u32::try_from(v).ok();
        Self { degree: p, inverse: opt(inv), norm: opt(norm) }
    }

    pub fn label(&self) -> String {
        let opt = |v: Option<u32>| v.map_or("none".to_string(), |d| d.to_string());
        format!("p={} p_inv={} p_norm={}", self.degree, opt(self.inverse), opt(self.norm))
    }
}

/// Number of scored terms: `E[1/‖X‖]`, `E[‖X‖]`, `Σ E[X_j²]` and the three
/// components of `E[X]`.
const TERMS: usize = 6;

/// A test case: start point, control and Monte Carlo estimates of the scored
/// terms on the prediction grid (`TERMS × times`).
struct TestCase {
    x0: Vec<f64>,
    control: ControlSignal<f64>,
    moments: DMatrix<f64>,
}

fn test_cases(p: &Params, seed: u64) -> Result<Vec<TestCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts = ball_points(p.test_controls, p.start_radius, seed.wrapping_add(1));
    let fam = build_stabilized_family::<f64>(3)?;
    let record_every = (p.prediction_step / p.sde_step).round() as usize;
    let dt = p.horizon / p.control_pieces as f64;
    let knots: Vec<f64> = (0..=p.control_pieces).map(|k| k as f64 * dt).collect();
    let mut cases = vec![];
    for c in 0..p.test_controls {
        // ν_j(t) = a_j sin(b_j t + c_j), sampled at the piece midpoints
        let coeffs: Vec<[f64; 3]> = (0..3)
            .map(|_| {
                [
                    rng.random_range(0.0..p.amplitude_max),
                    rng.random_range(p.frequency_range[0]..p.frequency_range[1]),
                    rng.random_range(0.0..2.0 * std::f64::consts::PI),
                ]
            })
            .collect();
        let values = DMatrix::from_fn(p.control_pieces, 3, |k, j| {
            let t = (k as f64 + 0.5) * dt;
            coeffs[j][0] * (coeffs[j][1] * t + coeffs[j][2]).sin()
        });
        let control = ControlSignal::new(knots.clone(), values)?;
        let x0: Vec<f64> = starts.column(c).iter().copied().collect();
        let init = DMatrix::from_fn(p.trajectories, 3, |_, j| x0[j]);
        let ens = simulate_ensemble_with(
            &fam.controlled_system(&control)?,
            &init,
            0.0,
            p.horizon,
            p.sde_step,
            seed.wrapping_add(100 + c as u64),
            SimulationOptions { record_every },
        )?;
        let mut moments = DMatrix::zeros(TERMS, ens.n_steps);
        let w = 1.0 / ens.n_traj as f64;
        for k in 0..ens.n_steps {
            for j in 0..ens.n_traj {
                let x = ens.state(j, k);
                let sq: f64 = x.iter().map(|v| v * v).sum();
                let r = sq.sqrt();
                moments[(0, k)] += w / r;
                moments[(1, k)] += w * r;
                moments[(2, k)] += w * sq;
                for i in 0..3 {
                    moments[(3 + i, k)] += w * x[i];
                }
            }
        }
        cases.push(TestCase { x0, control, moments });
    }
    Ok(cases)
}

/// Surrogate estimates of the scored terms along a predicted trajectory.
fn predicted_terms(obj: &ObjectiveSpec<f64>, states: &DMatrix<f64>) -> DMatrix<f64> {
    let (inv, norm) = (&obj.potential[0].1, &obj.terminal[0].1);
    DMatrix::from_fn(TERMS, states.ncols(), |t, k| {
        let z: Vec<f64> = states.column(k).iter().copied().collect();
        match t {
            0 => obj.observable(inv, &z),
            1 => obj.observable(norm, &z),
            2 => obj.i2.iter().map(|&i| z[i]).sum(),
            _ => z[obj.i1[t - 3]],
        }
    })
}

/// Relative `L₂` error in time of each scored term, with the mean vector
/// `E[X]` counted as one term; averaged over terms and test cases.
fn validation_error(cfg: Config, p: &Params, cases: &[TestCase], seed: u64) -> Result<f64> {
    let dict = Arc::new(Dictionary::hydrogen_composite(cfg.degree, cfg.inverse, cfg.norm)?);
    let obj = ObjectiveSpec::hydrogen_with(&dict, p.closure)?;
    let fam = build_stabilized_family::<f64>(3)?;
    let w = p.box_half_width;
    let s = train_surrogate(&fam, dict, p.samples, &[-w; 3], &[w; 3], seed)?;
    let groups: [&[usize]; 4] = [&[0], &[1], &[2], &[3, 4, 5]];
    let mut total = 0.0;
    for case in cases {
        let pred = predict_observables(&s, &s.lift(&case.x0)?, &case.control, p.prediction_step)?;
        if pred.states.ncols() != case.moments.ncols() {
            return Err(CliError::Config("prediction and simulation grids differ".into()));
        }
        let terms = predicted_terms(&obj, &pred.states);
        for rows in groups {
            let (mut num, mut den) = (0.0, 0.0);
            for &o in rows {
                for k in 0..case.moments.ncols() {
                    let (a, b) = (terms[(o, k)], case.moments[(o, k)]);
                    num += (a - b) * (a - b);
                    den += b * b;
                }
            }
            total += (num / den).sqrt() / groups.len() as f64;
        }
    }
    Ok(total / cases.len() as f64)
}

#[derive(Clone, Debug)]
pub struct SelectionOutput {
    pub configs: Vec<Config>,
    /// Configurations by realizations.
    pub errors: DMatrix<f64>,
    pub mean_errors: Vec<f64>,
    /// `1 +` the number of configurations with a clearly smaller mean error.
    pub ranks: Vec<usize>,
}

pub fn run(p: &Params, seed: u64) -> Result<SelectionOutput> {
    if p.realizations == 0 || p.test_controls == 0 || p.control_pieces == 0 {
        return Err(CliError::Config("realizations, test_controls and control_pieces must be positive".into()));
    }
    let configs: Vec<Config> = p
        .degrees
        .iter()
        .flat_map(|&d| p.inverse_degrees.iter().flat_map(move |&i| p.norm_degrees.iter().map(move |&n| Config::from_raw(d, i, n))))
        .collect();
    let cases = test_cases(p, seed)?;
    let jobs: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..p.realizations).map(move |r| (c, r))).collect();
    let errs = jobs
        .par_iter()
        .map(|&(c, r)| validation_error(configs[c], p, &cases, seed.wrapping_add(1000 + r as u64)))
        .collect::<Result<Vec<_>>>()?;
    let errors = DMatrix::from_row_slice(configs.len(), p.realizations, &errs);
    let mean_errors: Vec<f64> = errors.row_iter().map(|r| r.mean()).collect();
    let ranks = mean_errors
        .iter()
        .map(|&e| 1 + mean_errors.iter().filter(|&&o| o < e * (1.0 - 1e-9) || e.is_nan() && o.is_finite()).count())
        .collect();
    Ok(SelectionOutput { configs, errors, mean_errors, ranks })
}

pub fn outcome(p: &Params, seed: u64) -> Result<Outcome> {
    let out = run(p, seed)?;
    let expected = Config::from_raw(p.expected[0].max(0) as u32, p.expected[1], p.expected[2]);
    let position = out
        .configs
        .iter()
        .position(|c| *c == expected)
        .ok_or_else(|| CliError::Config(format!("{} is not among the tested configurations", expected.label())))?;
    let mut metrics = serde_json::Map::new();
    put(&mut metrics, "configurations", out.configs.iter().map(Config::label).collect::<Vec<_>>());
    put(&mut metrics, "mean_errors", &out.mean_errors);
    put(&mut metrics, "ranks", &out.ranks);
    put(&mut metrics, "expected_rank", out.ranks[position]);
    let raw = |v: Option<u32>| v.map_or(-1.0, f64::from);
    let mut table = Table::new("validation_errors", &["p", "p_inv", "p_norm", "realization", "error"]);
    for (c, cfg) in out.configs.iter().enumerate() {
        for r in 0..out.errors.ncols() {
            table.push(vec![cfg.degree as f64, raw(cfg.inverse), raw(cfg.norm), r as f64, out.errors[(c, r)]]);
        }
    }
    Ok(Outcome {
        metrics,
        checks: vec![Check::at_most(
            format!("rank of {}", expected.label()),
            out.ranks[position] as f64,
            p.max_rank as f64,
        )],
        tables: vec![table],
    })
}
