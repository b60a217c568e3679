//! Drift-diffusion processes `dX = b(X, t) dt + σ dB`: Euler–Maruyama
//! simulation of single paths and ensembles, plus Metropolis–Hastings
//! sampling of initial distributions.

mod io;

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::scalar::{to_f64_vec, Real};

pub use io::{read_ensemble_binary, write_ensemble_binary, write_ensemble_csv};

/// Drift callback: writes `b(x, t)` into the output slice. A drift that is
/// undefined at `x` signals this by writing a non-finite value.
pub type DriftFn<T> = Arc<dyn Fn(&[T], T, &mut [T]) + Send + Sync>;

/// Isotropic drift-diffusion process with covariance `σ² I`.
#[derive(Clone)]
pub struct DriftDiffusionSpec<T: Real> {
    dim: usize,
    drift: DriftFn<T>,
    sigma: T,
    time_dependent: bool,
}

impl<T: Real> std::fmt::Debug for DriftDiffusionSpec<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DriftDiffusionSpec")
            .field("dim", &self.dim)
            .field("sigma", &self.sigma)
            .field("time_dependent", &self.time_dependent)
            .finish()
    }
}

impl<T: Real> DriftDiffusionSpec<T> {
    pub fn new(
        dim: usize,
        sigma: T,
        drift: impl Fn(&[T], T, &mut [T]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if !(sigma >= T::zero()) || !sigma.finite() {
            return Err(invalid("diffusion scale must be finite and nonnegative"));
        }
        Ok(Self { dim, drift: Arc::new(drift), sigma, time_dependent: false })
    }

    /// Builds the process from an inverse temperature, `σ = √(2/β)`.
    pub fn with_inverse_temperature(
        dim: usize,
        beta: T,
        drift: impl Fn(&[T], T, &mut [T]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(beta > T::zero()) {
            return Err(invalid("inverse temperature must be positive"));
        }
        Self::new(dim, (T::lit(2.0) / beta).sqrt(), drift)
    }

    /// Gradient-type process `dX = −∇V dt + √(2/β) dB`.
    pub fn gradient(
        dim: usize,
        beta: T,
        grad_potential: impl Fn(&[T], &mut [T]) + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::with_inverse_temperature(dim, beta, move |x, _t, out| {
            grad_potential(x, out);
            for o in out.iter_mut() {
                *o = -*o;
            }
        })
    }

    pub fn time_dependent(mut self, flag: bool) -> Self {
        self.time_dependent = flag;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }

    /// `β⁻¹ = σ²/2`.
    pub fn inverse_beta(&self) -> T {
        self.sigma * self.sigma / T::lit(2.0)
    }

    /// `β = 2/σ²`; infinite for deterministic dynamics.
    pub fn beta(&self) -> T {
        let ib = self.inverse_beta();
        if ib == T::zero() {
            T::infinity()
        } else {
            T::one() / ib
        }
    }

    pub fn drift_fn(&self) -> &DriftFn<T> {
        &self.drift
    }

    /// Evaluates the drift, reporting non-finite output as a domain violation.
    pub fn drift_into(&self, x: &[T], t: T, out: &mut [T]) -> Result<()> {
        (self.drift)(x, t, out);
        if out.iter().all(|v| v.finite()) {
            Ok(())
        } else {
            Err(Error::DomainViolation {
                state: to_f64_vec(x),
                time: t.to_f64_lossy(),
                trajectory: None,
                step: None,
            })
        }
    }

    pub fn drift(&self, x: &[T], t: T) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.dim];
        self.drift_into(x, t, &mut out)?;
        Ok(out)
    }
}

/// One Euler–Maruyama step `x + b(x,t) h + σ √h ξ`, written into `out`.
pub fn euler_maruyama_step_into<T: Real>(
    spec: &DriftDiffusionSpec<T>,
    x: &[T],
    t: T,
    h: T,
    noise: &[T],
    out: &mut [T],
) -> Result<()> {
    spec.drift_into(x, t, out)?;
    let amp = spec.sigma * h.sqrt();
    for i in 0..x.len() {
        out[i] = x[i] + out[i] * h + amp * noise[i];
    }
    if out.iter().all(|v| v.finite()) {
        Ok(())
    } else {
        Err(Error::DomainViolation {
            state: to_f64_vec(x),
            time: t.to_f64_lossy(),
            trajectory: None,
            step: None,
        })
    }
}

/// Allocating variant of [`euler_maruyama_step_into`].
pub fn euler_maruyama_step<T: Real>(
    spec: &DriftDiffusionSpec<T>,
    x: &[T],
    t: T,
    h: T,
    noise: &[T],
) -> Result<Vec<T>> {
    if !(h > T::zero()) {
        return Err(invalid("step size must be positive"));
    }
    if x.len() != spec.dim || noise.len() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: x.len().min(noise.len()) });
    }
    let mut out = vec![T::zero(); spec.dim];
    euler_maruyama_step_into(spec, x, t, h, noise, &mut out)?;
    Ok(out)
}

/// Random stream for one trajectory: ChaCha8 keyed by the seed, with the
/// trajectory index selecting the stream.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[inline]
pub(crate) fn standard_normal<T: Real>(rng: &mut impl Rng) -> T {
    let z: f64 = rng.sample(StandardNormal);
    T::lit(z)
}

/// Simulated paths stored as `[n_traj][n_steps][dim]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEnsemble<T: Real> {
    pub dim: usize,
    pub n_traj: usize,
    pub n_steps: usize,
    pub times: Vec<T>,
    pub step_size: T,
    pub seed: u64,
    pub states: Vec<T>,
}

impl<T: Real> TrajectoryEnsemble<T> {
    pub fn state(&self, traj: usize, step: usize) -> &[T] {
        let off = (traj * self.n_steps + step) * self.dim;
        &self.states[off..off + self.dim]
    }

    pub fn trajectory(&self, traj: usize) -> &[T] {
        let len = self.n_steps * self.dim;
        &self.states[traj * len..(traj + 1) * len]
    }

    /// States of all trajectories at one time index as a `dim × n_traj` matrix.
    pub fn snapshot(&self, step: usize) -> DMatrix<T> {
        DMatrix::from_fn(self.dim, self.n_traj, |i, j| self.state(j, step)[i])
    }

    pub fn final_states(&self) -> DMatrix<T> {
        self.snapshot(self.n_steps.saturating_sub(1))
    }
}

/// Options for [`simulate_ensemble_with`].
#[derive(Clone, Copy, Debug)]
pub struct SimulationOptions {
    /// Store every `record_every`-th integrator step.
    pub record_every: usize,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { record_every: 1 }
    }
}

/// Evolves every row of `initial_states` (`n_traj × d`) from `t0` to `t1`
/// with step `h`, recording every step.
pub fn simulate_ensemble<T: Real>(
    spec: &DriftDiffusionSpec<T>,
    initial_states: &DMatrix<T>,
    t0: T,
    t1: T,
    h: T,
    seed: u64,
) -> Result<TrajectoryEnsemble<T>> {
    simulate_ensemble_with(spec, initial_states, t0, t1, h, seed, SimulationOptions::default())
}

pub fn simulate_ensemble_with<T: Real>(
    spec: &DriftDiffusionSpec<T>,
    initial_states: &DMatrix<T>,
    t0: T,
    t1: T,
    h: T,
    seed: u64,
    options: SimulationOptions,
) -> Result<TrajectoryEnsemble<T>> {
    if !(h > T::zero()) {
        return Err(invalid("step size must be positive"));
    }
    if !(t1 > t0) {
        return Err(invalid("t1 must exceed t0"));
    }
    if initial_states.nrows() > 0 && initial_states.ncols() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: initial_states.ncols() });
    }
    let stride = options.record_every.max(1);
    let ratio = ((t1 - t0) / h).to_f64_lossy();
    let n_int = ratio.round() as usize;
    if n_int == 0 || (ratio - n_int as f64).abs() > 1e-6 * ratio.max(1.0) {
        return Err(invalid("(t1 - t0) / h must be integral"));
    }
    if n_int % stride != 0 {
        return Err(invalid("record stride must divide the number of steps"));
    }
    let n_steps = n_int / stride + 1;
    let d = spec.dim;
    let n_traj = initial_states.nrows();
    let rec_h = h * T::usize(stride);
    let times: Vec<T> = (0..n_steps).map(|k| t0 + rec_h * T::usize(k)).collect();

    let paths: Vec<Result<Vec<T>>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(seed, i);
            let mut out = Vec::with_capacity(n_steps * d);
            let mut x: Vec<T> = initial_states.row(i).iter().copied().collect();
            let mut next = vec![T::zero(); d];
            let mut noise = vec![T::zero(); d];
            out.extend_from_slice(&x);
            for k in 0..n_int {
                let t = t0 + h * T::usize(k);
                for z in noise.iter_mut() {
                    *z = standard_normal(&mut rng);
                }
                euler_maruyama_step_into(spec, &x, t, h, &noise, &mut next).map_err(|e| match e {
                    Error::DomainViolation { state, time, .. } => Error::DomainViolation {
                        state,
                        time,
                        trajectory: Some(i),
                        step: Some(k),
                    },
                    other => other,
                })?;
                std::mem::swap(&mut x, &mut next);
                if (k + 1) % stride == 0 {
                    out.extend_from_slice(&x);
                }
            }
            Ok(out)
        })
        .collect();

    let mut states = Vec::with_capacity(n_traj * n_steps * d);
    for p in paths {
        states.extend(p?);
    }
    Ok(TrajectoryEnsemble { dim: d, n_traj, n_steps, times, step_size: rec_h, seed, states })
}

/// Unnormalized log-density with a Gaussian random-walk proposal scale.
#[derive(Clone)]
pub struct DensitySpec<T: Real> {
    pub dim: usize,
    pub log_density: Arc<dyn Fn(&[T]) -> T + Send + Sync>,
    pub proposal_stddev: T,
    /// Starting point of the chain; must have finite log-density.
    pub initial: Vec<T>,
}

impl<T: Real> DensitySpec<T> {
    pub fn new(initial: Vec<T>, log_density: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        Self {
            dim: initial.len(),
            log_density: Arc::new(log_density),
            proposal_stddev: T::lit(0.5),
            initial,
        }
    }

    pub fn with_proposal_stddev(mut self, s: T) -> Self {
        self.proposal_stddev = s;
        self
    }
}

/// Chain output of [`sample_metropolis_hastings`].
#[derive(Clone, Debug)]
pub struct McmcSamples<T: Real> {
    /// `n_samples × d`.
    pub samples: DMatrix<T>,
    pub acceptance_rate: f64,
}

/// Gaussian random-walk Metropolis–Hastings. Returns `n_samples` draws
/// after discarding `burn_in` steps and keeping every `thinning`-th state.
pub fn sample_metropolis_hastings<T: Real>(
    density: &DensitySpec<T>,
    n_samples: usize,
    burn_in: usize,
    thinning: usize,
    seed: u64,
) -> Result<McmcSamples<T>> {
    if thinning == 0 {
        return Err(invalid("thinning must be at least 1"));
    }
    if !(density.proposal_stddev > T::zero()) {
        return Err(invalid("proposal stddev must be positive"));
    }
    let d = density.dim;
    let nan_check = |x: &[T], lp: T| -> Result<T> {
        if lp.to_f64_lossy().is_nan() {
            Err(Error::DomainViolation { state: to_f64_vec(x), time: 0.0, trajectory: None, step: None })
        } else {
            Ok(lp)
        }
    };
    let mut rng = trajectory_rng(seed, 0);
    let mut x = density.initial.clone();
    let mut lp = nan_check(&x, (density.log_density)(&x))?;
    if !lp.finite() {
        return Err(invalid("initial state must have finite log-density"));
    }
    let mut proposal = vec![T::zero(); d];
    let mut samples = DMatrix::<T>::zeros(n_samples, d);
    let total = burn_in + n_samples * thinning;
    let mut accepted = 0usize;
    let mut kept = 0usize;
    for step in 0..total {
        for i in 0..d {
            proposal[i] = x[i] + density.proposal_stddev * standard_normal::<T>(&mut rng);
        }
        let lp_new = nan_check(&proposal, (density.log_density)(&proposal))?;
        let u: f64 = rng.random();
        let log_ratio = (lp_new - lp).to_f64_lossy();
        if lp_new.finite() && (log_ratio >= 0.0 || u.ln() < log_ratio) {
            x.copy_from_slice(&proposal);
            lp = lp_new;
            accepted += 1;
        }
        if step >= burn_in && (step - burn_in + 1) % thinning == 0 {
            for i in 0..d {
                samples[(kept, i)] = x[i];
            }
            kept += 1;
        }
    }
    let acceptance_rate = if total == 0 { 0.0 } else { accepted as f64 / total as f64 };
    log::debug!("metropolis-hastings acceptance ratio {acceptance_rate:.3}");
    Ok(McmcSamples { samples, acceptance_rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ou(sigma: f64) -> DriftDiffusionSpec<f64> {
        DriftDiffusionSpec::new(1, sigma, |x, _t, out| out[0] = -x[0]).unwrap()
    }

    #[test]
    fn beta_encodings_agree() {
        let s = DriftDiffusionSpec::<f64>::with_inverse_temperature(2, 2.0, |_, _, o| o.fill(0.0)).unwrap();
        assert!((s.sigma() - 1.0).abs() < 1e-15);
        assert!((s.inverse_beta() - 0.5).abs() < 1e-15);
        assert!((s.beta() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn step_examples() {
        let zero = DriftDiffusionSpec::<f64>::new(2, 0.0, |_, _, o| o.fill(0.0)).unwrap();
        assert_eq!(euler_maruyama_step(&zero, &[1.5, -2.0], 0.0, 0.3, &[0.7, 0.1]).unwrap(), vec![1.5, -2.0]);
        let y = euler_maruyama_step(&ou(0.0), &[1.0], 0.0, 0.1, &[0.0]).unwrap();
        assert!((y[0] - 0.9).abs() < 1e-15);
        let y = euler_maruyama_step(&ou(1.0), &[0.0], 0.0, 0.01, &[1.0]).unwrap();
        assert!((y[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn step_in_single_precision() {
        let s = DriftDiffusionSpec::<f32>::new(1, 1.0, |x, _t, out| out[0] = -x[0]).unwrap();
        let y = euler_maruyama_step(&s, &[0.0f32], 0.0, 0.01, &[1.0]).unwrap();
        assert!((y[0] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn nonfinite_drift_is_a_domain_violation() {
        let s = DriftDiffusionSpec::<f64>::new(1, 1.0, |x, _t, o| o[0] = 1.0 / x[0].tan()).unwrap();
        let err = euler_maruyama_step(&s, &[0.0], 0.0, 0.1, &[0.0]).unwrap_err();
        assert!(matches!(err, Error::DomainViolation { .. }));
    }

    #[test]
    fn deterministic_ensemble_follows_exponential_decay() {
        let init = DMatrix::from_element(1, 1, 1.0);
        let ens = simulate_ensemble(&ou(0.0), &init, 0.0, 1.0, 1e-3, 1).unwrap();
        assert_eq!(ens.n_steps, 1001);
        let xt = ens.state(0, 1000)[0];
        assert!((xt - (-1.0f64).exp()).abs() < 2e-3);
    }

    #[test]
    fn empty_ensemble_is_allowed() {
        let init = DMatrix::<f64>::zeros(0, 1);
        let ens = simulate_ensemble(&ou(1.0), &init, 0.0, 1.0, 0.1, 1).unwrap();
        assert_eq!(ens.n_traj, 0);
        assert!(ens.states.is_empty());
    }

    #[test]
    fn sigma_zero_trajectories_coincide() {
        let init = DMatrix::from_element(3, 1, 0.7);
        let ens = simulate_ensemble(&ou(0.0), &init, 0.0, 0.5, 0.01, 9).unwrap();
        assert_eq!(ens.trajectory(0), ens.trajectory(1));
        assert_eq!(ens.trajectory(0), ens.trajectory(2));
    }

    #[test]
    fn reproducible_and_stream_independent() {
        let init = DMatrix::from_element(4, 1, 0.0);
        let a = simulate_ensemble(&ou(1.0), &init, 0.0, 1.0, 0.01, 42).unwrap();
        let b = simulate_ensemble(&ou(1.0), &init, 0.0, 1.0, 0.01, 42).unwrap();
        assert_eq!(a, b);
        // the first trajectory does not depend on how many others there are
        let c = simulate_ensemble(&ou(1.0), &init.rows(0, 1).into_owned(), 0.0, 1.0, 0.01, 42).unwrap();
        assert_eq!(a.trajectory(0), c.trajectory(0));
        assert_ne!(a.trajectory(0), a.trajectory(1));
    }

    #[test]
    fn wall_hit_reports_trajectory_and_step() {
        let s = DriftDiffusionSpec::<f64>::new(1, 0.0, |x, _t, o| {
            o[0] = if x[0] > 0.0 { -10.0 } else { f64::NAN };
        })
        .unwrap();
        let init = DMatrix::from_vec(2, 1, vec![50.0, 0.05]);
        let err = simulate_ensemble(&s, &init, 0.0, 1.0, 0.01, 0).unwrap_err();
        match err {
            Error::DomainViolation { trajectory, step, .. } => {
                assert_eq!(trajectory, Some(1));
                assert_eq!(step, Some(1));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn recording_stride_keeps_every_kth_state() {
        let init = DMatrix::from_element(2, 1, 0.3);
        let full = simulate_ensemble(&ou(1.0), &init, 0.0, 1.0, 0.01, 3).unwrap();
        let thin =
            simulate_ensemble_with(&ou(1.0), &init, 0.0, 1.0, 0.01, 3, SimulationOptions { record_every: 10 })
                .unwrap();
        assert_eq!(thin.n_steps, 11);
        assert_eq!(thin.state(1, 5), full.state(1, 50));
        assert!((thin.step_size - 0.1).abs() < 1e-15);
    }

    #[test]
    fn metropolis_hastings_standard_normal_moments() {
        let spec = DensitySpec::new(vec![0.0], |x: &[f64]| -0.5 * x[0] * x[0]).with_proposal_stddev(1.0);
        let out = sample_metropolis_hastings(&spec, 100_000, 1000, 10, 5).unwrap();
        let n = out.samples.nrows() as f64;
        let mean = out.samples.sum() / n;
        let var = out.samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
        assert!(out.acceptance_rate > 0.2 && out.acceptance_rate < 0.9);
    }

    #[test]
    fn metropolis_hastings_respects_support() {
        let spec = DensitySpec::new(vec![0.5], |x: &[f64]| {
            if (0.0..=1.0).contains(&x[0]) { 0.0 } else { f64::NEG_INFINITY }
        });
        let out = sample_metropolis_hastings(&spec, 5000, 100, 2, 1).unwrap();
        assert!(out.samples.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn metropolis_hastings_nan_log_density_errors() {
        let spec = DensitySpec::new(vec![0.5], |x: &[f64]| if x[0] > 0.6 { f64::NAN } else { 0.0 });
        assert!(matches!(
            sample_metropolis_hastings(&spec, 1000, 0, 1, 1),
            Err(Error::DomainViolation { .. })
        ));
    }
}
