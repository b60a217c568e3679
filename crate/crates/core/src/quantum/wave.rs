//! Wave functions in polar form `ψ = e^{R + iS}` and the stochastic
//! velocities they induce.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::scalar::{to_f64_vec, Real};
use crate::sde::DriftDiffusionSpec;

pub type ScalarFn<T> = Arc<dyn Fn(&[T], T) -> T + Send + Sync>;
pub type VectorFn<T> = Arc<dyn Fn(&[T], T, &mut [T]) + Send + Sync>;

/// Polar representation of a (possibly time-dependent) wave function.
#[derive(Clone)]
pub struct WaveFunctionRS<T: Real> {
    dim: usize,
    r: ScalarFn<T>,
    s: ScalarFn<T>,
    grad_r: VectorFn<T>,
    grad_s: VectorFn<T>,
    /// `S` is constant in space, so the wave function is real and positive
    /// up to a global phase.
    positive: bool,
}

impl<T: Real> std::fmt::Debug for WaveFunctionRS<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WaveFunctionRS").field("dim", &self.dim).field("positive", &self.positive).finish()
    }
}

impl<T: Real> WaveFunctionRS<T> {
    pub fn new(
        dim: usize,
        r: impl Fn(&[T], T) -> T + Send + Sync + 'static,
        s: impl Fn(&[T], T) -> T + Send + Sync + 'static,
        grad_r: impl Fn(&[T], T, &mut [T]) + Send + Sync + 'static,
        grad_s: impl Fn(&[T], T, &mut [T]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            r: Arc::new(r),
            s: Arc::new(s),
            grad_r: Arc::new(grad_r),
            grad_s: Arc::new(grad_s),
            positive: false,
        }
    }

    /// Strictly positive stationary state `e^{R(x)} e^{−iEt}`.
    pub fn positive_stationary(
        dim: usize,
        energy: T,
        r: impl Fn(&[T]) -> T + Send + Sync + 'static,
        grad_r: impl Fn(&[T], &mut [T]) + Send + Sync + 'static,
    ) -> Self {
        let mut w = Self::new(
            dim,
            move |x, _t| r(x),
            move |_x, t| -energy * t,
            move |x, _t, out| grad_r(x, out),
            |_x, _t, out| out.fill(T::zero()),
        );
        w.positive = true;
        w
    }

    /// Real stationary state `f(x) e^{−iEt}` whose sign is absorbed into the
    /// phase: `R = log|f|`, `S = −Et + π·[f < 0]`.
    pub fn real_stationary(
        dim: usize,
        energy: T,
        f: impl Fn(&[T]) -> T + Send + Sync + 'static,
        grad_f: impl Fn(&[T], &mut [T]) + Send + Sync + 'static,
    ) -> Self {
        let f = Arc::new(f);
        let f2 = f.clone();
        let f3 = f.clone();
        Self::new(
            dim,
            move |x, _t| f(x).abs().ln(),
            move |x, t| {
                let phase = if f2(x) < T::zero() { T::pi() } else { T::zero() };
                phase - energy * t
            },
            move |x, _t, out| {
                grad_f(x, out);
                let v = f3(x);
                for o in out.iter_mut() {
                    *o /= v;
                }
            },
            |_x, _t, out| out.fill(T::zero()),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_positive(&self) -> bool {
        self.positive
    }

    pub fn r(&self, x: &[T], t: T) -> T {
        (self.r)(x, t)
    }

    pub fn s(&self, x: &[T], t: T) -> T {
        (self.s)(x, t)
    }

    pub fn grad_r_into(&self, x: &[T], t: T, out: &mut [T]) {
        (self.grad_r)(x, t, out)
    }

    pub fn grad_s_into(&self, x: &[T], t: T, out: &mut [T]) {
        (self.grad_s)(x, t, out)
    }

    pub fn grad_r(&self, x: &[T], t: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        self.grad_r_into(x, t, &mut out);
        out
    }

    pub fn grad_s(&self, x: &[T], t: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        self.grad_s_into(x, t, &mut out);
        out
    }

    pub fn value(&self, x: &[T], t: T) -> Complex<T> {
        let amp = self.r(x, t).exp();
        let s = self.s(x, t);
        Complex::new(amp * s.cos(), amp * s.sin())
    }

    /// `ρ = |ψ|² = e^{2R}`.
    pub fn density(&self, x: &[T], t: T) -> T {
        (T::lit(2.0) * self.r(x, t)).exp()
    }

    /// Multiplies by a positive constant, i.e. shifts `R` by `log c`.
    pub fn scaled(&self, c: T) -> Result<Self> {
        if !(c > T::zero()) {
            return Err(Error::InvalidInput("scale must be positive".into()));
        }
        let r = self.r.clone();
        let log_c = c.ln();
        let mut out = self.clone();
        out.r = Arc::new(move |x, t| r(x, t) + log_c);
        Ok(out)
    }
}

/// Harmonic-oscillator coherent state centred at `x₀ cos(ωt)` (one dimension).
pub fn coherent_state<T: Real>(omega: T, x0: T) -> WaveFunctionRS<T> {
    let half = T::lit(0.5);
    let quarter = T::lit(0.25);
    let log_norm = quarter * (omega / T::pi()).ln();
    WaveFunctionRS::new(
        1,
        move |x, t| {
            let c = x[0] - x0 * (omega * t).cos();
            log_norm - half * omega * c * c
        },
        move |x, t| {
            -half * omega * t
                - omega * (x[0] * x0 * (omega * t).sin() - quarter * x0 * x0 * (T::lit(2.0) * omega * t).sin())
        },
        move |x, t, out| out[0] = -omega * (x[0] - x0 * (omega * t).cos()),
        move |_x, t, out| out[0] = -omega * x0 * (omega * t).sin(),
    )
}

const NODAL_FLOOR: f64 = 1e-300;

#[inline]
fn weighted<T: Real>(a: T, g: T) -> T {
    if a == T::zero() {
        T::zero()
    } else {
        a * g
    }
}

struct Parts<T> {
    a1: T,
    a2: T,
    ds: T,
    gr1: Vec<T>,
    gr2: Vec<T>,
    gs1: Vec<T>,
    gs2: Vec<T>,
}

fn parts<T: Real>(p1: &WaveFunctionRS<T>, p2: &WaveFunctionRS<T>, x: &[T], t: T) -> Parts<T> {
    Parts {
        a1: p1.r(x, t).exp(),
        a2: p2.r(x, t).exp(),
        ds: p1.s(x, t) - p2.s(x, t),
        gr1: p1.grad_r(x, t),
        gr2: p2.grad_r(x, t),
        gs1: p1.grad_s(x, t),
        gs2: p2.grad_s(x, t),
    }
}

impl<T: Real> Parts<T> {
    fn w(&self) -> T {
        self.a1 * self.a1 + self.a2 * self.a2 + T::lit(2.0) * self.a1 * self.a2 * self.ds.cos()
    }

    fn u_prime(&self, out: &mut [T]) {
        let (c, s) = (self.ds.cos(), self.ds.sin());
        let a12 = self.a1 * self.a2;
        for i in 0..out.len() {
            out[i] = weighted(self.a1 * self.a1, self.gr1[i])
                + weighted(self.a2 * self.a2, self.gr2[i])
                + weighted(a12, c * (self.gr1[i] + self.gr2[i]) - s * (self.gs1[i] - self.gs2[i]));
        }
    }

    fn v_prime(&self, out: &mut [T]) {
        let (c, s) = (self.ds.cos(), self.ds.sin());
        let a12 = self.a1 * self.a2;
        for i in 0..out.len() {
            out[i] = weighted(self.a1 * self.a1, self.gs1[i])
                + weighted(self.a2 * self.a2, self.gs2[i])
                + weighted(a12, s * (self.gr1[i] - self.gr2[i]) + c * (self.gs1[i] + self.gs2[i]));
        }
    }
}

/// The superposition `ψ₁ + ψ₂` in polar form. Gradients are non-finite at
/// nodes of the superposition.
pub fn superposition<T: Real>(p1: &WaveFunctionRS<T>, p2: &WaveFunctionRS<T>) -> Result<WaveFunctionRS<T>> {
    if p1.dim() != p2.dim() {
        return Err(Error::DimensionMismatch { expected: p1.dim(), got: p2.dim() });
    }
    let floor = T::lit(NODAL_FLOOR);
    let (a, b) = (p1.clone(), p2.clone());
    let r = move |x: &[T], t: T| T::lit(0.5) * parts(&a, &b, x, t).w().ln();
    let (a, b) = (p1.clone(), p2.clone());
    let s = move |x: &[T], t: T| {
        let (r1, r2) = (a.r(x, t).exp(), b.r(x, t).exp());
        let (s1, s2) = (a.s(x, t), b.s(x, t));
        (r1 * s1.sin() + r2 * s2.sin()).atan2(r1 * s1.cos() + r2 * s2.cos())
    };
    let (a, b) = (p1.clone(), p2.clone());
    let grad_r = move |x: &[T], t: T, out: &mut [T]| {
        let p = parts(&a, &b, x, t);
        let w = p.w();
        p.u_prime(out);
        for o in out.iter_mut() {
            *o = if w > floor { *o / w } else { T::nan() };
        }
    };
    let (a, b) = (p1.clone(), p2.clone());
    let grad_s = move |x: &[T], t: T, out: &mut [T]| {
        let p = parts(&a, &b, x, t);
        let w = p.w();
        p.v_prime(out);
        for o in out.iter_mut() {
            *o = if w > floor { *o / w } else { T::nan() };
        }
    };
    Ok(WaveFunctionRS::new(p1.dim(), r, s, grad_r, grad_s))
}

/// Osmotic velocity `u = ∇R` and current velocity `v = ∇S`.
#[derive(Clone, Debug)]
pub struct VelocityField<T: Real> {
    wave: WaveFunctionRS<T>,
}

impl<T: Real> VelocityField<T> {
    fn check(&self, x: &[T], out: &[T]) -> Result<()> {
        if out.iter().all(|v| v.finite()) {
            Ok(())
        } else {
            Err(Error::NodalPoint { state: to_f64_vec(x) })
        }
    }

    pub fn dim(&self) -> usize {
        self.wave.dim()
    }

    pub fn osmotic(&self, x: &[T], t: T) -> Result<Vec<T>> {
        let u = self.wave.grad_r(x, t);
        self.check(x, &u)?;
        Ok(u)
    }

    pub fn current(&self, x: &[T], t: T) -> Result<Vec<T>> {
        let v = self.wave.grad_s(x, t);
        self.check(x, &v)?;
        Ok(v)
    }

    /// Mean forward velocity `b = u + v`.
    pub fn drift(&self, x: &[T], t: T) -> Result<Vec<T>> {
        let mut b = self.osmotic(x, t)?;
        for (bi, vi) in b.iter_mut().zip(self.current(x, t)?) {
            *bi += vi;
        }
        Ok(b)
    }

    /// Nelson diffusion `dX = (u + v) dt + dB`.
    pub fn to_sde(&self) -> DriftDiffusionSpec<T> {
        let w = self.wave.clone();
        let d = w.dim();
        DriftDiffusionSpec::new(d, T::one(), move |x, t, out| {
            w.grad_r_into(x, t, out);
            let mut gs = vec![T::zero(); out.len()];
            w.grad_s_into(x, t, &mut gs);
            for (o, g) in out.iter_mut().zip(gs) {
                *o += g;
            }
        })
        .expect("unit diffusion is valid")
        .time_dependent(!self.wave.is_positive())
    }
}

pub fn nelson_velocities<T: Real>(psi: &WaveFunctionRS<T>) -> VelocityField<T> {
    VelocityField { wave: psi.clone() }
}

pub fn superposition_velocities<T: Real>(
    psi1: &WaveFunctionRS<T>,
    psi2: &WaveFunctionRS<T>,
) -> Result<VelocityField<T>> {
    Ok(VelocityField { wave: superposition(psi1, psi2)? })
}

/// Drift `∇R` and unit diffusion for a strictly positive ground state.
pub fn ground_state_to_sde<T: Real>(ground: &WaveFunctionRS<T>) -> Result<DriftDiffusionSpec<T>> {
    if !ground.is_positive() {
        return Err(Error::NonPositiveGroundState);
    }
    let g = ground.clone();
    DriftDiffusionSpec::new(ground.dim(), T::one(), move |x, t, out| g.grad_r_into(x, t, out))
}

/// Largest `|∂ρ/∂t + ∇·(vρ)|` over the rows of `grid` (`n × d`), using
/// central differences with time step `dt` and a fixed spatial step.
pub fn continuity_residual<T: Real>(psi: &WaveFunctionRS<T>, grid: &DMatrix<T>, t: T, dt: T) -> T {
    let d = psi.dim();
    let hx = T::lit(1e-4);
    let two = T::lit(2.0);
    let flux = |x: &[T], i: usize| -> T {
        let gs = psi.grad_s(x, t);
        gs[i] * psi.density(x, t)
    };
    let mut worst = T::zero();
    let mut x = vec![T::zero(); d];
    for row in grid.row_iter() {
        for i in 0..d {
            x[i] = row[i];
        }
        let drho = (psi.density(&x, t + dt) - psi.density(&x, t - dt)) / (two * dt);
        let mut div = T::zero();
        for i in 0..d {
            let xi = x[i];
            x[i] = xi + hx;
            let fp = flux(&x, i);
            x[i] = xi - hx;
            let fm = flux(&x, i);
            x[i] = xi;
            div += (fp - fm) / (two * hx);
        }
        let r = (drho + div).abs();
        if r > worst || !r.finite() {
            worst = r;
        }
    }
    worst
}
