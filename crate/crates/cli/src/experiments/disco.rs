//! Imaginary-time wave functions from the bilinear surrogate of the
//! stabilized Ornstein–Uhlenbeck family: the oscillator on a grid and the
//! hydrogen atom on random points of a ball. The oscillator run also checks
//! the surrogate against Euler–Maruyama averages under a random control.

use std::sync::Arc;

use koopq_core::dictionary::Dictionary;
use koopq_core::disco::{
    MomentClosure,
    build_stabilized_family, compute_value_field, predict_observables, train_surrogate, value_to_wavefunction,
    ControlSignal, ObjectiveSpec, OcpSettings,
};
use koopq_core::sde::simulate_ensemble;
use koopq_core::Surrogate;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{put, Outcome};
use crate::error::{CliError, Result};
use crate::report::{Check, Table};

/// Optimizer settings shared by both systems.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Solver {
    pub pieces: usize,
    pub step: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub max_step: f64,
    /// Symmetric bound `|ν_j| ≤ control_bound`; absent means unbounded.
    pub control_bound: Option<f64>,
}

impl Default for Solver {
    fn default() -> Self {
        let s = OcpSettings::<f64>::default();
        Self {
            pieces: 20,
            step: s.step,
            max_iterations: s.max_iterations,
            gradient_tolerance: s.gradient_tolerance,
            max_step: s.max_step,
            control_bound: None,
        }
    }
}

impl Solver {
    fn settings(&self) -> OcpSettings<f64> {
        OcpSettings {
            pieces: self.pieces,
            step: self.step,
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            max_step: self.max_step,
            control_bounds: self.control_bound.map(|b| (-b, b)),
            ..OcpSettings::default()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QhoParams {
    pub degree: u32,
    pub samples: usize,
    pub box_half_width: f64,
    pub x_lower: f64,
    pub x_upper: f64,
    pub x_points: usize,
    pub horizon: f64,
    pub tau_points: usize,
    pub solver: Solver,
    pub max_mean_error: f64,
    pub max_error: f64,
    pub prediction: Prediction,
}

/// Random piecewise-constant control applied to surrogate and SDE.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prediction {
    pub pieces: usize,
    pub horizon: f64,
    pub amplitude: f64,
    pub x0: f64,
    pub trajectories: usize,
    pub step: f64,
    pub max_relative_error: f64,
}

impl Default for Prediction {
    fn default() -> Self {
        Self { pieces: 50, horizon: 10.0, amplitude: 10.0, x0: 0.5, trajectories: 1000, step: 1e-3, max_relative_error: 0.1 }
    }
}

impl Default for QhoParams {
    fn default() -> Self {
        Self {
            degree: 3,
            samples: 30_000,
            box_half_width: 3.0,
            x_lower: -2.0,
            x_upper: 2.0,
            x_points: 41,
            horizon: 1.0,
            tau_points: 11,
            solver: Solver::default(),
            max_mean_error: 0.01,
            max_error: 0.02,
            prediction: Prediction::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HydrogenParams {
    pub degree: u32,
    pub inverse_degree: Option<u32>,
    pub norm_degree: Option<u32>,
    pub samples: usize,
    pub box_half_width: f64,
    pub points: usize,
    pub radius: f64,
    pub horizon: f64,
    pub tau: f64,
    /// Closure for `E[1/‖X‖]` and `E[‖X‖]` when the dictionary lacks them.
    pub closure: MomentClosure,
    pub solver: Solver,
    pub max_mean_error: f64,
}

impl Default for HydrogenParams {
    fn default() -> Self {
        Self {
            degree: 2,
            inverse_degree: None,
            norm_degree: None,
            samples: 30_000,
            box_half_width: 3.0,
            points: 1000,
            radius: 2.0,
            horizon: 1.0,
            tau: 0.5,
            closure: MomentClosure::Gaussian,
            solver: Solver::default(),
            max_mean_error: 0.08,
        }
    }
}

fn surrogate(dim: usize, dict: Dictionary<f64>, samples: usize, half_width: f64, seed: u64) -> Result<Surrogate> {
    let fam = build_stabilized_family::<f64>(dim)?;
    Ok(train_surrogate(&fam, Arc::new(dict), samples, &vec![-half_width; dim], &vec![half_width; dim], seed)?)
}

/// Pointwise `|a − b| / b` of two already normalized samples.
fn relative_errors(estimate: &[f64], exact: &[f64]) -> Vec<f64> {
    estimate.iter().zip(exact).map(|(a, b)| (a - b).abs() / b).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Surrogate and Monte Carlo estimates of `E[X]`, `E[X²]` under one random
/// control.
#[derive(Clone, Debug)]
pub struct PredictionOutput {
    pub times: Vec<f64>,
    pub control: Vec<f64>,
    pub surrogate: [Vec<f64>; 2],
    pub monte_carlo: [Vec<f64>; 2],
    pub relative_l2: [f64; 2],
}

pub fn run_prediction(s: &Surrogate, p: &Prediction, seed: u64) -> Result<PredictionOutput> {
    let ix = s.dictionary.position("x").ok_or_else(|| CliError::Config("dictionary lacks x".into()))?;
    let ixx = s.dictionary.position("x^2").ok_or_else(|| CliError::Config("dictionary lacks x^2".into()))?;
    if p.pieces == 0 {
        return Err(CliError::Config("prediction needs at least one control piece".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..p.pieces).map(|_| rng.random_range(-p.amplitude..=p.amplitude)).collect();
    let knots: Vec<f64> = (0..=p.pieces).map(|k| p.horizon * k as f64 / p.pieces as f64).collect();
    let control = ControlSignal::new(knots, DMatrix::from_column_slice(p.pieces, 1, &values))?;
    let pred = predict_observables(s, &s.lift(&[p.x0])?, &control, p.step)?;
    let fam = build_stabilized_family::<f64>(1)?;
    let sde = fam.controlled_system(&control)?;
    let init = DMatrix::from_element(p.trajectories, 1, p.x0);
    let ens = simulate_ensemble(&sde, &init, 0.0, p.horizon, p.step, seed.wrapping_add(1))?;
    if ens.n_steps != pred.states.ncols() {
        return Err(CliError::Config("surrogate and SDE grids differ; choose a step dividing the pieces".into()));
    }
    let n = ens.n_traj as f64;
    let mut mc = [vec![0.0; ens.n_steps], vec![0.0; ens.n_steps]];
    for k in 0..ens.n_steps {
        for j in 0..ens.n_traj {
            let x = ens.state(j, k)[0];
            mc[0][k] += x / n;
            mc[1][k] += x * x / n;
        }
    }
    let sur = [pred.states.row(ix).iter().copied().collect::<Vec<_>>(), pred.states.row(ixx).iter().copied().collect()];
    let rel = |a: &[f64], b: &[f64]| {
        let num: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
        let den: f64 = b.iter().map(|v| v * v).sum();
        (num / den).sqrt()
    };
    let relative_l2 = [rel(&sur[0], &mc[0]), rel(&sur[1], &mc[1])];
    let times = ens.times.clone();
    let control = times.iter().map(|&t| control.value_at(t)[0]).collect();
    Ok(PredictionOutput { times, control, surrogate: sur, monte_carlo: mc, relative_l2 })
}

#[derive(Clone, Debug)]
pub struct QhoOutput {
    pub xs: Vec<f64>,
    pub taus: Vec<f64>,
    /// `J`, points by times.
    pub values: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub exact: DMatrix<f64>,
    pub errors: DMatrix<f64>,
    pub converged: usize,
    pub iterations: usize,
    pub prediction: PredictionOutput,
}

pub fn run_qho(p: &QhoParams, seed: u64) -> Result<QhoOutput> {
    if p.x_points < 2 || p.tau_points < 1 {
        return Err(CliError::Config("need at least two x points and one tau point".into()));
    }
    let s = surrogate(1, Dictionary::monomials(1, p.degree), p.samples, p.box_half_width, seed)?;
    let obj = ObjectiveSpec::qho(&s.dictionary)?;
    let xs: Vec<f64> = (0..p.x_points).map(|i| p.x_lower + (p.x_upper - p.x_lower) * i as f64 / (p.x_points - 1) as f64).collect();
    let taus: Vec<f64> =
        (0..p.tau_points).map(|k| if p.tau_points == 1 { 0.0 } else { p.horizon * k as f64 / (p.tau_points - 1) as f64 }).collect();
    let starts: Vec<f64> = taus.iter().map(|t| p.horizon - t).collect();
    let points = DMatrix::from_row_slice(1, xs.len(), &xs);
    let field = compute_value_field(&s, &obj, &points, &starts, p.horizon, &p.solver.settings())?;
    let wave = value_to_wavefunction(&field);
    let psi = wave.normalized();
    // exact e^{−(x² + τ)/2}, normalized by the same trapezoid rule at τ = 0
    let ground: Vec<f64> = xs.iter().map(|x| (-0.5 * x * x).exp()).collect();
    let z = koopq_core::disco::trapezoid(&xs, &ground);
    let exact = DMatrix::from_fn(xs.len(), taus.len(), |i, k| ground[i] * (-0.5 * taus[k]).exp() / z);
    let errors = psi.zip_map(&exact, |a, b| (a - b).abs() / b);
    let prediction = run_prediction(&s, &p.prediction, seed.wrapping_add(2))?;
    Ok(QhoOutput {
        converged: field.converged.iter().filter(|&&c| c).count(),
        iterations: field.iterations.iter().sum(),
        xs,
        taus,
        values: field.values,
        psi,
        exact,
        errors,
        prediction,
    })
}

pub fn qho_outcome(p: &QhoParams, seed: u64) -> Result<Outcome> {
    let out = run_qho(p, seed)?;
    let errs: Vec<f64> = out.errors.iter().copied().collect();
    let mean_err = mean(&errs);
    let max_err = errs.iter().copied().fold(0.0, |m: f64, e| if e.is_nan() { f64::NAN } else { m.max(e) });
    let mut metrics = serde_json::Map::new();
    put(&mut metrics, "mean_relative_error", mean_err);
    put(&mut metrics, "max_relative_error", max_err);
    put(&mut metrics, "converged_cells", out.converged);
    put(&mut metrics, "total_iterations", out.iterations);
    put(&mut metrics, "prediction_relative_l2", out.prediction.relative_l2);
    let mut field = Table::new("wavefunction", &["x", "tau", "J", "psi", "exact", "relative_error"]);
    for (i, x) in out.xs.iter().enumerate() {
        for (k, t) in out.taus.iter().enumerate() {
            field.push(vec![*x, *t, out.values[(i, k)], out.psi[(i, k)], out.exact[(i, k)], out.errors[(i, k)]]);
        }
    }
    let pr = &out.prediction;
    let mut prediction = Table::new("prediction", &["t", "control", "mean_surrogate", "mean_sde", "second_surrogate", "second_sde"]);
    // the plot does not need every integrator step
    let stride = (pr.times.len() / 1000).max(1);
    for k in (0..pr.times.len()).step_by(stride) {
        prediction.push(vec![
            pr.times[k],
            pr.control[k],
            pr.surrogate[0][k],
            pr.monte_carlo[0][k],
            pr.surrogate[1][k],
            pr.monte_carlo[1][k],
        ]);
    }
    let limit = p.prediction.max_relative_error;
    Ok(Outcome {
        metrics,
        checks: vec![
            Check::at_most("mean relative error of psi", mean_err, p.max_mean_error),
            Check::at_most("max relative error of psi", max_err, p.max_error),
            Check::at_most("relative L2 error of E[X]", pr.relative_l2[0], limit),
            Check::at_most("relative L2 error of E[X^2]", pr.relative_l2[1], limit),
        ],
        tables: vec![field, prediction],
    })
}

/// Uniform points in the centred ball, as columns.
pub fn ball_points(n: usize, radius: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(3, n);
    let mut filled = 0;
    while filled < n {
        let p: [f64; 3] = std::array::from_fn(|_| rng.random_range(-radius..radius));
        if p.iter().map(|v| v * v).sum::<f64>() < radius * radius {
            out.column_mut(filled).copy_from_slice(&p);
            filled += 1;
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct HydrogenOutput {
    pub points: DMatrix<f64>,
    pub values: Vec<f64>,
    pub psi: Vec<f64>,
    pub exact: Vec<f64>,
    pub errors: Vec<f64>,
    pub converged: usize,
}

pub fn run_hydrogen(p: &HydrogenParams, seed: u64) -> Result<HydrogenOutput> {
    if !(p.tau >= 0.0 && p.tau <= p.horizon) {
        return Err(CliError::Config("tau must lie in [0, horizon]".into()));
    }
    let dict = Dictionary::hydrogen_composite(p.degree, p.inverse_degree, p.norm_degree)?;
    let s = surrogate(3, dict, p.samples, p.box_half_width, seed)?;
    let obj = ObjectiveSpec::hydrogen_with(&s.dictionary, p.closure)?;
    let points = ball_points(p.points, p.radius, seed.wrapping_add(1));
    let field = compute_value_field(&s, &obj, &points, &[p.horizon - p.tau], p.horizon, &p.solver.settings())?;
    let values: Vec<f64> = field.values.column(0).iter().copied().collect();
    // normalize over the sampled ball in log space: ψ_i = e^{−J_i} / mean(e^{−J})
    let shift = values.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = values.iter().map(|j| (shift - j).exp()).collect();
    let z = mean(&raw);
    let psi: Vec<f64> = raw.iter().map(|v| v / z).collect();
    let radii: Vec<f64> = points.column_iter().map(|c| c.norm()).collect();
    let exact_raw: Vec<f64> = radii.iter().map(|r| (-r).exp()).collect();
    let ze = mean(&exact_raw);
    let exact: Vec<f64> = exact_raw.iter().map(|v| v / ze).collect();
    let errors = relative_errors(&psi, &exact);
    Ok(HydrogenOutput { converged: field.converged.iter().filter(|&&c| c).count(), points, values, psi, exact, errors })
}

pub fn hydrogen_outcome(p: &HydrogenParams, seed: u64) -> Result<Outcome> {
    let out = run_hydrogen(p, seed)?;
    let mean_err = mean(&out.errors);
    let mut metrics = serde_json::Map::new();
    put(&mut metrics, "mean_relative_error", if mean_err.is_finite() { Some(mean_err) } else { None });
    put(&mut metrics, "converged_cells", out.converged);
    let mut table = Table::new("wavefunction", &["x1", "x2", "x3", "r", "J", "psi", "exact", "relative_error"]);
    for (i, c) in out.points.column_iter().enumerate() {
        table.push(vec![c[0], c[1], c[2], c.norm(), out.values[i], out.psi[i], out.exact[i], out.errors[i]]);
    }
    Ok(Outcome {
        metrics,
        checks: vec![Check::at_most("mean relative error of psi", mean_err, p.max_mean_error)],
        tables: vec![table],
    })
}
