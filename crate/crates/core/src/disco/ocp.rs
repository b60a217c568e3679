use nalgebra::{DMatrix, DVector};

use super::BilinearSurrogate;
use crate::dictionary::Dictionary;
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Default RK4 step for the surrogate dynamics.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Piecewise-constant control: `values` row `k` holds `ν` on `[knots[k], knots[k+1])`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSignal<T: Real> {
    knots: Vec<T>,
    values: DMatrix<T>,
}

impl<T: Real> ControlSignal<T> {
    pub fn new(knots: Vec<T>, values: DMatrix<T>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.nrows() + 1 {
            return Err(invalid("need one more knot than control pieces"));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("knots must be strictly increasing"));
        }
        if knots.iter().chain(values.iter()).any(|v| !v.finite()) {
            return Err(invalid("knots and control values must be finite"));
        }
        Ok(Self { knots, values })
    }

    /// `n` uniform pieces on `[t0, t1]` with constant value zero. A zero-length
    /// horizon yields a signal without pieces.
    pub fn zeros(t0: T, t1: T, n: usize, d: usize) -> Result<Self> {
        if t1 == t0 {
            return Self::new(vec![t0], DMatrix::zeros(0, d));
        }
        if n == 0 {
            return Err(invalid("at least one control piece is required"));
        }
        let knots = (0..=n).map(|k| t0 + (t1 - t0) * T::usize(k) / T::usize(n)).collect();
        Self::new(knots, DMatrix::zeros(n, d))
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn pieces(&self) -> usize {
        self.values.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn start(&self) -> T {
        self.knots[0]
    }

    pub fn end(&self) -> T {
        self.knots[self.knots.len() - 1]
    }

    pub fn piece(&self, k: usize) -> Vec<T> {
        self.values.row(k).iter().copied().collect()
    }

    pub fn set_values(&mut self, values: DMatrix<T>) -> Result<()> {
        if values.shape() != self.values.shape() {
            return Err(Error::DimensionMismatch { expected: self.values.len(), got: values.len() });
        }
        self.values = values;
        Ok(())
    }

    /// Control value at time `t`, clamped to the first and last piece.
    pub fn value_at(&self, t: T) -> Vec<T> {
        if self.pieces() == 0 {
            return vec![T::zero(); self.control_dim()];
        }
        let k = self.knots[1..self.knots.len() - 1].iter().take_while(|&&s| s <= t).count();
        self.piece(k)
    }
}

/// Integration grid of a control signal: each piece is split into equal
/// substeps no longer than `step`.
#[derive(Clone, Debug)]
pub struct TimeGrid<T: Real> {
    pub times: Vec<T>,
    pub piece_of_step: Vec<usize>,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(control: &ControlSignal<T>, step: T) -> Self {
        let mut times = vec![control.start()];
        let mut piece_of_step = Vec::new();
        for k in 0..control.pieces() {
            let (a, b) = (control.knots[k], control.knots[k + 1]);
            // slack so that exact multiples of `step` do not gain a step
            let n = ((b - a) / step * T::lit(1.0 - 1e-12)).ceil().to_usize().unwrap_or(1).max(1);
            for i in 1..=n {
                times.push(if i == n { b } else { a + (b - a) * T::usize(i) / T::usize(n) });
                piece_of_step.push(k);
            }
        }
        Self { times, piece_of_step }
    }

    pub fn steps(&self) -> usize {
        self.piece_of_step.len()
    }

    pub fn step_size(&self, i: usize) -> T {
        self.times[i + 1] - self.times[i]
    }
}

/// Surrogate state `z` on the integration grid (`n × (steps+1)`).
#[derive(Clone, Debug)]
pub struct Prediction<T: Real> {
    pub grid: TimeGrid<T>,
    pub states: DMatrix<T>,
}

impl<T: Real> Prediction<T> {
    pub fn times(&self) -> &[T] {
        &self.grid.times
    }

    pub fn final_state(&self) -> Vec<T> {
        self.states.column(self.states.ncols() - 1).iter().copied().collect()
    }
}

/// Powers `(hM)^k v` for `k = 0..=4`.
fn krylov<T: Real>(hm: &DMatrix<T>, v: &DVector<T>) -> [DVector<T>; 5] {
    let v1 = hm * v;
    let v2 = hm * &v1;
    let v3 = hm * &v2;
    let v4 = hm * &v3;
    [v.clone(), v1, v2, v3, v4]
}

const INV_FACT: [f64; 5] = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];

/// One classical RK4 step of the linear system `ż = M z`.
fn rk4_apply<T: Real>(hm: &DMatrix<T>, z: &DVector<T>) -> DVector<T> {
    let p = krylov(hm, z);
    let mut out = p[0].clone();
    for k in 1..5 {
        out.axpy(T::lit(INV_FACT[k]), &p[k], T::one());
    }
    out
}

/// Integrates `ż = (A + Σ_j ν_j B_j) z` from `z0` with classical RK4. Knots
/// are grid points, so every substep sees a single control value.
pub fn predict_observables<T: Real>(
    surrogate: &BilinearSurrogate<T>,
    z0: &[T],
    control: &ControlSignal<T>,
    step: T,
) -> Result<Prediction<T>> {
    let n = surrogate.len();
    if z0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: z0.len() });
    }
    if control.control_dim() != surrogate.control_dim() {
        return Err(Error::DimensionMismatch { expected: surrogate.control_dim(), got: control.control_dim() });
    }
    let grid = TimeGrid::new(control, step);
    let mut states = DMatrix::zeros(n, grid.steps() + 1);
    let mut z = DVector::from_column_slice(z0);
    states.set_column(0, &z);
    let mats: Vec<DMatrix<T>> = (0..control.pieces()).map(|k| surrogate.system_matrix(&control.piece(k))).collect();
    for i in 0..grid.steps() {
        let hm = &mats[grid.piece_of_step[i]] * grid.step_size(i);
        z = rk4_apply(&hm, &z);
        states.set_column(i + 1, &z);
    }
    Ok(Prediction { grid, states })
}

/// A scalar read off the surrogate state.
#[derive(Clone, Debug, PartialEq)]
pub enum ObservableRef {
    /// A dictionary entry `z_i`.
    Index(usize),
    /// `1/‖z_{I1}‖`, a stand-in for `E[1/‖X‖]`.
    InverseNormOfMean,
    /// `‖z_{I1}‖`, a stand-in for `E[‖X‖]`.
    NormOfMean,
    /// `E[1/‖X‖]` for an isotropic three-dimensional Gaussian whose mean is
    /// `z_{I1}` and whose variance comes from `z_{I2}`.
    GaussianInverseNorm,
    /// `E[‖X‖]` under the same Gaussian closure.
    GaussianNorm,
}

/// How `E[1/‖X‖]` and `E[‖X‖]` are read off the moment blocks when the
/// dictionary has no `1/r` or `r` entries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentClosure {
    /// `1/‖E[X]‖` and `‖E[X]‖`.
    #[default]
    Mean,
    /// Exact expectations for a Gaussian with matching first and second
    /// moments; the stabilized OU family started from a point is Gaussian.
    Gaussian,
}

/// Value and partial derivatives `(f, ∂f/∂r, ∂f/∂s)` of `E[1/‖X‖]` and
/// `E[‖X‖]` for `X ~ N(m, s² I₃)` with `r = ‖m‖`.
fn gaussian_norm_moments(r: f64, s: f64) -> ([f64; 3], [f64; 3]) {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let a = r / s;
    if a < 1e-4 {
        return ([c / s, 0.0, -c / (s * s)], [2.0 * c * s, 0.0, 2.0 * c]);
    }
    let e = (-0.5 * a * a).exp();
    let er = statrs::function::erf::erf(a / std::f64::consts::SQRT_2);
    let inv = [er / r, c * e / (s * r) - er / (r * r), -c * e / (s * s)];
    let norm = [s * c * e + (r + s * s / r) * er, c * e / a + (1.0 - 1.0 / (a * a)) * er, 2.0 * er / a];
    (inv, norm)
}

/// Control part of the running cost.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlCost {
    /// `½ E[‖G(X) ν̂‖²]` for the stabilized family:
    /// `½ Σ z_{I2} − z_{I1}ᵀ ν + ½ νᵀν`.
    Stabilized,
    /// `½ νᵀν`.
    Plain,
}

/// Running cost `Σ c_k obs_k(z) + control cost`, plus terminal cost
/// `Σ c_k obs_k(z(T))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveSpec<T: Real> {
    pub potential: Vec<(T, ObservableRef)>,
    pub terminal: Vec<(T, ObservableRef)>,
    pub control_cost: ControlCost,
    /// Indices of `x_1, …, x_d` (the mean block).
    pub i1: Vec<usize>,
    /// Indices of `x_1², …, x_d²`.
    pub i2: Vec<usize>,
}

fn require<'a, T: Real>(dict: &'a Dictionary<T>, name: &str) -> Result<&'a [usize]> {
    let idx = dict.indices(name)?;
    if idx.iter().any(|&i| i >= dict.len()) {
        return Err(Error::IndexMissing(name.into()));
    }
    Ok(idx)
}

impl<T: Real> ObjectiveSpec<T> {
    /// Harmonic oscillator: `W = x²/2`, terminal `−log ψ_0 = x²/2`.
    pub fn qho(dict: &Dictionary<T>) -> Result<Self> {
        let i1 = require(dict, "I1")?.to_vec();
        let i2 = require(dict, "I2")?.to_vec();
        let half = T::lit(0.5);
        Ok(Self {
            potential: i2.iter().map(|&i| (half, ObservableRef::Index(i))).collect(),
            terminal: i2.iter().map(|&i| (half, ObservableRef::Index(i))).collect(),
            control_cost: ControlCost::Stabilized,
            i1,
            i2,
        })
    }

    /// Hydrogen: `W = −1/‖x‖`, terminal `‖x‖`. Uses the dictionary's `1/r`
    /// and `r` entries when present and the mean-based stand-ins otherwise.
    pub fn hydrogen(dict: &Dictionary<T>) -> Result<Self> {
        Self::hydrogen_with(dict, MomentClosure::Mean)
    }

    /// [`ObjectiveSpec::hydrogen`] with a choice of closure for missing
    /// `1/r` or `r` entries.
    pub fn hydrogen_with(dict: &Dictionary<T>, closure: MomentClosure) -> Result<Self> {
        let i1 = require(dict, "I1")?.to_vec();
        let i2 = require(dict, "I2")?.to_vec();
        let (inv_stand_in, norm_stand_in) = match closure {
            MomentClosure::Mean => (ObservableRef::InverseNormOfMean, ObservableRef::NormOfMean),
            MomentClosure::Gaussian => (ObservableRef::GaussianInverseNorm, ObservableRef::GaussianNorm),
        };
        let inv = match dict.indices("I_inv") {
            Ok(i) => ObservableRef::Index(i[0]),
            Err(_) => inv_stand_in,
        };
        let norm = match dict.indices("I_norm") {
            Ok(i) => ObservableRef::Index(i[0]),
            Err(_) => norm_stand_in,
        };
        Ok(Self {
            potential: vec![(-T::one(), inv)],
            terminal: vec![(T::one(), norm)],
            control_cost: ControlCost::Stabilized,
            i1,
            i2,
        })
    }

    /// Checks every referenced index against a state of length `n`.
    pub fn validate(&self, n: usize, control_dim: usize) -> Result<()> {
        let bad = |i: usize| Error::IndexMissing(format!("index {i} (state has {n} entries)"));
        for (_, r) in self.potential.iter().chain(&self.terminal) {
            match r {
                ObservableRef::Index(i) if *i >= n => return Err(bad(*i)),
                ObservableRef::InverseNormOfMean | ObservableRef::NormOfMean if self.i1.is_empty() => {
                    return Err(Error::IndexMissing("I1".into()))
                }
                ObservableRef::GaussianInverseNorm | ObservableRef::GaussianNorm
                    if self.i1.len() != 3 || self.i2.len() != 3 =>
                {
                    return Err(Error::IndexMissing("three-dimensional I1/I2 blocks".into()))
                }
                _ => {}
            }
        }
        if let Some(&i) = self.i1.iter().chain(&self.i2).find(|&&i| i >= n) {
            return Err(bad(i));
        }
        if self.control_cost == ControlCost::Stabilized && (self.i1.len() != control_dim || self.i2.len() != control_dim) {
            return Err(Error::IndexMissing("I1/I2 blocks matching the control dimension".into()));
        }
        Ok(())
    }

    fn mean_norm(&self, z: &[T]) -> T {
        self.i1.iter().map(|&i| z[i] * z[i]).fold(T::zero(), |a, b| a + b).sqrt()
    }

    /// `(r, s)` of the Gaussian closure: mean norm and per-axis standard
    /// deviation, floored so that a deterministic state stays finite.
    fn closure_params(&self, z: &[T]) -> (f64, f64) {
        let r = self.mean_norm(z).to_f64_lossy();
        let second: f64 = self.i2.iter().map(|&i| z[i].to_f64_lossy()).sum();
        let var = ((second - r * r) / self.i2.len() as f64).max(1e-24);
        (r, var.sqrt())
    }

    /// Value of `r` at the surrogate state `z`.
    pub fn observable(&self, r: &ObservableRef, z: &[T]) -> T {
        match r {
            ObservableRef::Index(i) => z[*i],
            ObservableRef::InverseNormOfMean => T::one() / self.mean_norm(z),
            ObservableRef::NormOfMean => self.mean_norm(z),
            ObservableRef::GaussianInverseNorm | ObservableRef::GaussianNorm => {
                let (rn, s) = self.closure_params(z);
                let (inv, norm) = gaussian_norm_moments(rn, s);
                T::lit(if *r == ObservableRef::GaussianNorm { norm[0] } else { inv[0] })
            }
        }
    }

    fn observable_grad(&self, c: T, r: &ObservableRef, z: &[T], g: &mut [T]) {
        match r {
            ObservableRef::Index(i) => g[*i] += c,
            ObservableRef::InverseNormOfMean => {
                let nrm = self.mean_norm(z);
                let f = -c / (nrm * nrm * nrm);
                for &i in &self.i1 {
                    g[i] += f * z[i];
                }
            }
            ObservableRef::NormOfMean => {
                let f = c / self.mean_norm(z);
                for &i in &self.i1 {
                    g[i] += f * z[i];
                }
            }
            ObservableRef::GaussianInverseNorm | ObservableRef::GaussianNorm => {
                let (rn, s) = self.closure_params(z);
                let (inv, norm) = gaussian_norm_moments(rn, s);
                let [_, f_r, f_s] = if *r == ObservableRef::GaussianNorm { norm } else { inv };
                // s² = (Σ z_{I2} − r²)/3
                let k = self.i2.len() as f64;
                let ds_dvar = 0.5 / s;
                let c = c.to_f64_lossy();
                for &i in &self.i1 {
                    let m = z[i].to_f64_lossy();
                    let dr = if rn > 0.0 { m / rn } else { 0.0 };
                    g[i] += T::lit(c * (f_r * dr - f_s * ds_dvar * 2.0 * m / k));
                }
                for &i in &self.i2 {
                    g[i] += T::lit(c * f_s * ds_dvar / k);
                }
            }
        }
    }

    /// Running cost `ℓ(z, ν)`.
    pub fn running(&self, z: &[T], nu: &[T]) -> T {
        let mut l = self.potential.iter().fold(T::zero(), |a, (c, r)| a + *c * self.observable(r, z));
        let half = T::lit(0.5);
        let nn = nu.iter().fold(T::zero(), |a, &u| a + u * u);
        l += half * nn;
        if self.control_cost == ControlCost::Stabilized {
            for (k, &u) in nu.iter().enumerate() {
                l += half * z[self.i2[k]] - z[self.i1[k]] * u;
            }
        }
        l
    }

    /// Adds `c · ∂ℓ/∂z` to `gz` and `c · ∂ℓ/∂ν` to `gnu`.
    fn running_grad(&self, c: T, z: &[T], nu: &[T], gz: &mut [T], gnu: &mut [T]) {
        for (w, r) in &self.potential {
            self.observable_grad(c * *w, r, z, gz);
        }
        for (k, &u) in nu.iter().enumerate() {
            gnu[k] += c * u;
        }
        if self.control_cost == ControlCost::Stabilized {
            let half = T::lit(0.5);
            for (k, &u) in nu.iter().enumerate() {
                gz[self.i2[k]] += c * half;
                gz[self.i1[k]] -= c * u;
                gnu[k] -= c * z[self.i1[k]];
            }
        }
    }

    /// Terminal cost at `z(T)`.
    pub fn terminal_cost(&self, z: &[T]) -> T {
        self.terminal.iter().fold(T::zero(), |a, (c, r)| a + *c * self.observable(r, z))
    }
}

/// Evaluates `J = ∫ ℓ(z, ν) ds + terminal(z(T))` by the trapezoid rule on
/// the prediction grid; each substep uses the control of its own piece.
pub fn assemble_objective<T: Real>(
    surrogate: &BilinearSurrogate<T>,
    objective: &ObjectiveSpec<T>,
    prediction: &Prediction<T>,
    control: &ControlSignal<T>,
) -> Result<T> {
    objective.validate(surrogate.len(), surrogate.control_dim())?;
    if prediction.grid.times.first() != Some(&control.start()) || prediction.grid.times.last() != Some(&control.end()) {
        return Err(invalid("prediction and control must share the time grid"));
    }
    let col = |i: usize| -> Vec<T> { prediction.states.column(i).iter().copied().collect() };
    let half = T::lit(0.5);
    let mut j = T::zero();
    for i in 0..prediction.grid.steps() {
        let nu = control.piece(prediction.grid.piece_of_step[i]);
        let h = prediction.grid.step_size(i);
        j += half * h * (objective.running(&col(i), &nu) + objective.running(&col(i + 1), &nu));
    }
    j += objective.terminal_cost(&prediction.final_state());
    if !j.finite() {
        return Err(Error::NonFiniteObjective);
    }
    Ok(j)
}

/// Optimizer settings for [`solve_ocp`].
#[derive(Clone, Debug)]
pub struct OcpSettings<T: Real> {
    pub pieces: usize,
    pub step: T,
    pub max_iterations: usize,
    pub gradient_tolerance: T,
    /// Armijo sufficient-decrease constant.
    pub armijo: T,
    /// Upper bound on the step length along the `L²` steepest-descent
    /// direction.
    pub max_step: T,
    /// Optional box `[lo, hi]` applied to every control component; the
    /// descent becomes a projected-gradient method.
    pub control_bounds: Option<(T, T)>,
}

impl<T: Real> Default for OcpSettings<T> {
    fn default() -> Self {
        Self {
            pieces: 50,
            step: T::lit(DEFAULT_STEP),
            max_iterations: 500,
            gradient_tolerance: T::lit(1e-6),
            armijo: T::lit(1e-4),
            max_step: T::one(),
            control_bounds: None,
        }
    }
}

/// Result of one optimal-control solve.
#[derive(Clone, Debug)]
pub struct OcpSolution<T: Real> {
    pub value: T,
    pub control: ControlSignal<T>,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: T,
    /// Objective after each accepted iteration, starting with the initial guess.
    pub history: Vec<T>,
}

/// Objective and its exact gradient for the discretized problem, obtained
/// by a backward (adjoint) sweep through the RK4 recursion.
pub fn objective_and_gradient<T: Real>(
    surrogate: &BilinearSurrogate<T>,
    objective: &ObjectiveSpec<T>,
    z0: &[T],
    control: &ControlSignal<T>,
    step: T,
) -> Result<(T, DMatrix<T>)> {
    let pred = predict_observables(surrogate, z0, control, step)?;
    let value = assemble_objective(surrogate, objective, &pred, control)?;
    let grid = &pred.grid;
    let n = surrogate.len();
    let d = surrogate.control_dim();
    let mut grad = DMatrix::zeros(control.pieces(), d);
    let steps = grid.steps();
    if steps == 0 {
        return Ok((value, grad));
    }
    let half = T::lit(0.5);
    let col = |i: usize| -> Vec<T> { pred.states.column(i).iter().copied().collect() };
    let mats: Vec<DMatrix<T>> = (0..control.pieces()).map(|k| surrogate.system_matrix(&control.piece(k))).collect();

    let mut lam = vec![T::zero(); n];
    let zk = col(steps);
    for (c, r) in &objective.terminal {
        objective.observable_grad(*c, r, &zk, &mut lam);
    }
    let mut scratch_nu = vec![T::zero(); d];
    {
        let p = grid.piece_of_step[steps - 1];
        objective.running_grad(half * grid.step_size(steps - 1), &zk, &control.piece(p), &mut lam, &mut scratch_nu);
        for (k, g) in scratch_nu.iter().enumerate() {
            grad[(p, k)] += *g;
        }
    }
    for i in (0..steps).rev() {
        let p = grid.piece_of_step[i];
        let h = grid.step_size(i);
        let nu = control.piece(p);
        let zi = col(i);
        let hm = &mats[p] * h;
        let lam_v = DVector::from_column_slice(&lam);
        let zi_v = DVector::from_column_slice(&zi);
        // ∂/∂ν_j of λᵀ R(hM) z with R(X) = Σ X^k/k!:
        // h Σ_{a+b ≤ 3} (Xᵀ)^a λ · B_j X^b z / (a+b+1)!
        let hmt = hm.transpose();
        let u = krylov(&hmt, &lam_v);
        let v = krylov(&hm, &zi_v);
        for (j, bj) in surrogate.b.iter().enumerate() {
            let mut acc = T::zero();
            for b in 0..4 {
                let bv = bj * &v[b];
                for a in 0..(4 - b) {
                    acc += T::lit(INV_FACT[a + b + 1]) * u[a].dot(&bv);
                }
            }
            grad[(p, j)] += h * acc;
        }
        // λ_i = R(hM)ᵀ λ_{i+1} + quadrature terms at node i
        let mut next = u[0].clone();
        for k in 1..5 {
            next.axpy(T::lit(INV_FACT[k]), &u[k], T::one());
        }
        lam.copy_from_slice(next.as_slice());
        scratch_nu.fill(T::zero());
        objective.running_grad(half * h, &zi, &nu, &mut lam, &mut scratch_nu);
        for (k, g) in scratch_nu.iter().enumerate() {
            grad[(p, k)] += *g;
        }
        if i > 0 {
            let q = grid.piece_of_step[i - 1];
            scratch_nu.fill(T::zero());
            objective.running_grad(half * grid.step_size(i - 1), &zi, &control.piece(q), &mut lam, &mut scratch_nu);
            for (k, g) in scratch_nu.iter().enumerate() {
                grad[(q, k)] += *g;
            }
        }
    }
    Ok((value, grad))
}

fn inf_norm<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
}

/// Minimizes the surrogate objective over piecewise-constant controls on
/// `[tau, t_end]`, starting from `ν ≡ 0` and `z(τ) = Φ(x)`.
///
/// Steepest descent in the `L²` metric (the gradient of each piece is divided
/// by its length) with Armijo backtracking; the step grows after every
/// accepted iteration. Stops when the gradient's ∞-norm drops below the
/// tolerance, after `max_iterations`, or when no decrease can be found.
pub fn solve_ocp<T: Real>(
    surrogate: &BilinearSurrogate<T>,
    objective: &ObjectiveSpec<T>,
    x: &[T],
    tau: T,
    t_end: T,
    settings: &OcpSettings<T>,
) -> Result<OcpSolution<T>> {
    if t_end < tau {
        return Err(invalid("horizon end must not precede the start time"));
    }
    objective.validate(surrogate.len(), surrogate.control_dim())?;
    let z0 = surrogate.lift(x)?;
    let project = |m: DMatrix<T>| match settings.control_bounds {
        Some((lo, hi)) => m.map(|v| v.max(lo).min(hi)),
        None => m,
    };
    let mut control = ControlSignal::zeros(tau, t_end, settings.pieces, surrogate.control_dim())?;
    control.set_values(project(control.values().clone()))?;
    let (mut value, mut grad) = objective_and_gradient(surrogate, objective, &z0, &control, settings.step)?;
    let widths: Vec<T> = control.knots().windows(2).map(|w| w[1] - w[0]).collect();
    let mut history = vec![value];
    let mut alpha = T::one();
    let mut iterations = 0;
    let mut converged = false;
    // gradient components that point out of an active bound do not count
    let stationarity = |c: &ControlSignal<T>, g: &DMatrix<T>| match settings.control_bounds {
        Some((lo, hi)) => {
            let mut m = T::zero();
            for (v, d) in c.values().iter().zip(g.iter()) {
                let blocked = (*v <= lo && *d > T::zero()) || (*v >= hi && *d < T::zero());
                if !blocked {
                    m = m.max(d.abs());
                }
            }
            m
        }
        None => inf_norm(g),
    };
    while iterations < settings.max_iterations {
        if stationarity(&control, &grad) < settings.gradient_tolerance {
            converged = true;
            break;
        }
        let mut dir = -grad.clone();
        for (k, w) in widths.iter().enumerate() {
            dir.row_mut(k).unscale_mut(*w);
        }
        let mut accepted = None;
        for _ in 0..60 {
            let next = project(control.values() + &dir * alpha);
            let slope = grad.dot(&(&next - control.values()));
            let mut trial = control.clone();
            trial.set_values(next)?;
            if let Ok((v, g)) = objective_and_gradient(surrogate, objective, &z0, &trial, settings.step) {
                if v <= value + settings.armijo * slope && slope < T::zero() {
                    accepted = Some((trial, v, g));
                    break;
                }
            }
            alpha *= T::lit(0.5);
        }
        let Some((trial, v, g)) = accepted else { break };
        control = trial;
        value = v;
        grad = g;
        history.push(value);
        iterations += 1;
        alpha = (alpha * T::lit(2.0)).min(settings.max_step);
    }
    let gradient_norm = stationarity(&control, &grad);
    if !converged && gradient_norm < settings.gradient_tolerance {
        converged = true;
    }
    Ok(OcpSolution { value, control, iterations, converged, gradient_norm, history })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::disco::{build_stabilized_family, train_surrogate};

    fn qho_surrogate() -> BilinearSurrogate<f64> {
        let fam = build_stabilized_family::<f64>(1).unwrap();
        train_surrogate(&fam, Arc::new(Dictionary::monomials(1, 3)), 5000, &[-3.0], &[3.0], 11).unwrap()
    }

    #[test]
    fn control_signal_lookup_and_validation() {
        let c = ControlSignal::new(vec![0.0, 0.5, 1.0], DMatrix::from_row_slice(2, 1, &[1.0, -1.0])).unwrap();
        assert_eq!(c.value_at(0.2), vec![1.0]);
        assert_eq!(c.value_at(0.5), vec![-1.0]);
        assert_eq!(c.value_at(7.0), vec![-1.0]);
        assert!(ControlSignal::new(vec![0.0, 0.0], DMatrix::<f64>::zeros(1, 1)).is_err());
        assert!(ControlSignal::new(vec![0.0, 1.0], DMatrix::from_element(1, 1, f64::NAN)).is_err());
    }

    #[test]
    fn gaussian_closure_matches_sampling_and_limits() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let (m, sd) = ([0.4, -0.3, 0.2], 0.6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let (mut inv, mut norm) = (0.0, 0.0);
        for _ in 0..n {
            let x: Vec<f64> = m.iter().map(|c| {
                let e: f64 = StandardNormal.sample(&mut rng);
                c + sd * e
            }).collect();
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            inv += 1.0 / r / n as f64;
            norm += r / n as f64;
        }
        let rm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (ci, cn) = gaussian_norm_moments(rm, sd);
        assert!((ci[0] - inv).abs() < 0.02 * inv, "{} vs {inv}", ci[0]);
        assert!((cn[0] - norm).abs() < 0.005 * norm, "{} vs {norm}", cn[0]);
        // far from the origin both tend to the point values
        let (ci, cn) = gaussian_norm_moments(5.0, 1e-6);
        assert!((ci[0] - 0.2).abs() < 1e-12 && (cn[0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_closure_gradient_matches_differences() {
        let dict = Dictionary::<f64>::monomials(3, 2);
        let obj = ObjectiveSpec::hydrogen_with(&dict, MomentClosure::Gaussian).unwrap();
        let mut z: Vec<f64> = dict.eval(&[0.3, -0.5, 0.8]).unwrap().iter().copied().collect();
        for &i in &obj.i2 {
            z[i] += 0.2;
        }
        for r in [ObservableRef::GaussianInverseNorm, ObservableRef::GaussianNorm] {
            let mut g = vec![0.0; z.len()];
            obj.observable_grad(1.0, &r, &z, &mut g);
            for k in obj.i1.iter().chain(&obj.i2) {
                let h = 1e-6;
                let (mut zp, mut zm) = (z.clone(), z.clone());
                zp[*k] += h;
                zm[*k] -= h;
                let fd = (obj.observable(&r, &zp) - obj.observable(&r, &zm)) / (2.0 * h);
                assert!((fd - g[*k]).abs() < 1e-6, "{r:?} index {k}: {fd} vs {}", g[*k]);
            }
        }
    }

    #[test]
    fn uncontrolled_mean_decays() {
        let s = qho_surrogate();
        let c = ControlSignal::zeros(0.0, 1.0, 4, 1).unwrap();
        let p = predict_observables(&s, &s.lift(&[2.0]).unwrap(), &c, 1e-3).unwrap();
        let z = p.final_state();
        assert!((z[1] - 2.0 * (-1.0f64).exp()).abs() < 1e-6);
        let second = 4.0 * (-2.0f64).exp() + 0.5 * (1.0 - (-2.0f64).exp());
        assert!((z[2] - second).abs() < 1e-6);
    }

    #[test]
    fn constant_unit_control_drives_mean_to_one() {
        let s = qho_surrogate();
        let c = ControlSignal::new(vec![0.0, 10.0], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let p = predict_observables(&s, &s.lift(&[-1.0]).unwrap(), &c, 1e-3).unwrap();
        assert!((p.final_state()[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn uncontrolled_qho_objective_matches_closed_form() {
        let s = qho_surrogate();
        let obj = ObjectiveSpec::qho(&s.dictionary).unwrap();
        let c = ControlSignal::zeros(0.0, 1.0, 10, 1).unwrap();
        let p = predict_observables(&s, &s.lift(&[0.0]).unwrap(), &c, 1e-3).unwrap();
        let j = assemble_objective(&s, &obj, &p, &c).unwrap();
        let e2 = 0.5 * (1.0 - (-2.0f64).exp());
        let running = 0.5 * (1.0 - 0.5 * (1.0 - (-2.0f64).exp()));
        assert!((j - (running + 0.5 * e2)).abs() < 1e-3);
        assert!((j - 0.5).abs() < 1e-3);
    }

    #[test]
    fn zero_horizon_is_terminal_cost_only() {
        let s = qho_surrogate();
        let obj = ObjectiveSpec::qho(&s.dictionary).unwrap();
        let sol = solve_ocp(&s, &obj, &[1.5], 1.0, 1.0, &OcpSettings::default()).unwrap();
        assert!((sol.value - 0.5 * 1.5 * 1.5).abs() < 1e-12);
        assert!(sol.converged);
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let s = qho_surrogate();
        let obj = ObjectiveSpec::qho(&s.dictionary).unwrap();
        let z0 = s.lift(&[0.8]).unwrap();
        let vals = DMatrix::from_row_slice(3, 1, &[0.4, -0.7, 1.1]);
        let c = ControlSignal::new(vec![0.0, 0.3, 0.65, 1.0], vals.clone()).unwrap();
        let (_, g) = objective_and_gradient(&s, &obj, &z0, &c, 1e-2).unwrap();
        for k in 0..3 {
            let eps = 1e-6;
            let mut plus = c.clone();
            let mut minus = c.clone();
            let mut vp = vals.clone();
            vp[(k, 0)] += eps;
            plus.set_values(vp).unwrap();
            let mut vm = vals.clone();
            vm[(k, 0)] -= eps;
            minus.set_values(vm).unwrap();
            let jp = objective_and_gradient(&s, &obj, &z0, &plus, 1e-2).unwrap().0;
            let jm = objective_and_gradient(&s, &obj, &z0, &minus, 1e-2).unwrap().0;
            let fd = (jp - jm) / (2.0 * eps);
            assert!((fd - g[(k, 0)]).abs() < 1e-7, "piece {k}: fd {fd} adjoint {}", g[(k, 0)]);
        }
    }

    #[test]
    fn qho_optimum_is_the_analytic_value() {
        let s = qho_surrogate();
        let obj = ObjectiveSpec::qho(&s.dictionary).unwrap();
        let settings = OcpSettings { pieces: 10, ..OcpSettings::default() };
        let sol = solve_ocp(&s, &obj, &[0.0], 0.0, 1.0, &settings).unwrap();
        assert!(((-sol.value).exp() / (-0.5f64).exp() - 1.0).abs() < 0.02);
        assert!(sol.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn free_control_without_costs_stays_at_zero() {
        let s = qho_surrogate();
        let obj = ObjectiveSpec {
            potential: vec![],
            terminal: vec![],
            control_cost: ControlCost::Plain,
            i1: vec![1],
            i2: vec![2],
        };
        let sol = solve_ocp(&s, &obj, &[1.0], 0.0, 1.0, &OcpSettings { pieces: 5, ..OcpSettings::default() }).unwrap();
        assert_eq!(sol.value, 0.0);
        assert!(sol.control.values().norm() < 1e-4);
    }

    #[test]
    fn missing_index_is_reported() {
        let d = Dictionary::<f64>::monomials(1, 1);
        assert!(matches!(ObjectiveSpec::qho(&d), Err(Error::IndexMissing(_))));
        let s = qho_surrogate();
        let obj = ObjectiveSpec {
            potential: vec![(1.0, ObservableRef::Index(9))],
            terminal: vec![],
            control_cost: ControlCost::Plain,
            i1: vec![1],
            i2: vec![2],
        };
        assert!(matches!(solve_ocp(&s, &obj, &[0.0], 0.0, 1.0, &OcpSettings::default()), Err(Error::IndexMissing(_))));
    }

    #[test]
    fn bounded_solve_stops_on_the_active_face() {
        // the unconstrained optimum at x = 0 is ν ≡ 0, which lies below the box
        let s = qho_surrogate();
        let obj = ObjectiveSpec::qho(&s.dictionary).unwrap();
        let settings = OcpSettings { pieces: 4, control_bounds: Some((0.1, 0.5)), ..OcpSettings::default() };
        let sol = solve_ocp(&s, &obj, &[0.0], 0.0, 1.0, &settings).unwrap();
        assert!(sol.converged);
        assert!(sol.control.values().iter().all(|v| (v - 0.1).abs() < 1e-9));
        assert!(sol.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
