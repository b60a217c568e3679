//! Closed-form benchmark systems.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sde::DriftDiffusionSpec;

use super::hermite::{hermite, hermite_derivative};
use super::wave::WaveFunctionRS;

/// Analytically solvable Schrödinger problem `(−½Δ + W) ψ_ℓ = E_ℓ ψ_ℓ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnalyticSystem<T: Real> {
    /// Harmonic oscillator `W = ½ω²x²` in one dimension.
    Harmonic { omega: T },
    /// Particle in the box `(0, L)`.
    Box { length: T },
    /// Pöschl–Teller well `W = −s(s+1)/2 sech²(x)`; excited states are
    /// tabulated for `s = 4`.
    PoschlTeller { s: u32 },
    /// Hydrogen atom `W = −1/‖x‖` in three dimensions; ground state only.
    Hydrogen,
}

fn sech<T: Real>(x: T) -> T {
    T::one() / x.cosh()
}

fn norm<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |a, &v| a + v * v).sqrt()
}

impl<T: Real> AnalyticSystem<T> {
    /// Looks up a system by its registry name with default parameters.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "qho" => Some(Self::Harmonic { omega: T::one() }),
            "box" => Some(Self::Box { length: T::pi() }),
            "poschl-teller" => Some(Self::PoschlTeller { s: 4 }),
            "hydrogen" => Some(Self::Hydrogen),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Harmonic { .. } => "qho",
            Self::Box { .. } => "box",
            Self::PoschlTeller { .. } => "poschl-teller",
            Self::Hydrogen => "hydrogen",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Hydrogen => 3,
            _ => 1,
        }
    }

    pub fn potential(&self, x: &[T]) -> T {
        match *self {
            Self::Harmonic { omega } => T::lit(0.5) * omega * omega * x[0] * x[0],
            Self::Box { length } => {
                if x[0] >= T::zero() && x[0] <= length {
                    T::zero()
                } else {
                    T::infinity()
                }
            }
            Self::PoschlTeller { s } => {
                let s = T::lit(s as f64);
                let sh = sech(x[0]);
                -s * (s + T::one()) / T::lit(2.0) * sh * sh
            }
            Self::Hydrogen => -T::one() / norm(x),
        }
    }

    /// Number of tabulated eigenpairs; `None` when unbounded.
    pub fn n_states(&self) -> Option<usize> {
        match *self {
            Self::Harmonic { .. } | Self::Box { .. } => None,
            Self::PoschlTeller { s } => Some(if s == 4 { 4 } else { 1 }),
            Self::Hydrogen => Some(1),
        }
    }

    pub fn ground_energy(&self) -> T {
        self.energy(0).expect("ground state exists")
    }

    pub fn energy(&self, l: usize) -> Option<T> {
        if self.n_states().is_some_and(|n| l >= n) {
            return None;
        }
        Some(match *self {
            Self::Harmonic { omega } => omega * (T::usize(l) + T::lit(0.5)),
            Self::Box { length } => {
                let k = T::usize(l + 1);
                T::pi() * T::pi() * k * k / (T::lit(2.0) * length * length)
            }
            Self::PoschlTeller { s } => {
                if l == 0 {
                    -T::lit((s * s) as f64) / T::lit(2.0)
                } else {
                    T::lit([-8.0, -4.5, -2.0, -0.5][l])
                }
            }
            Self::Hydrogen => T::lit(-0.5),
        })
    }

    /// `ψ_ℓ(x)`: normalized for the oscillator and the box, unnormalized for
    /// the other systems.
    pub fn eigenfunction(&self, l: usize, x: &[T]) -> Option<T> {
        self.energy(l)?;
        Some(match *self {
            Self::Harmonic { omega } => {
                let z = omega.sqrt() * x[0];
                harmonic_norm::<T>(l, omega) * (-omega * x[0] * x[0] / T::lit(2.0)).exp() * hermite(l, z)
            }
            Self::Box { length } => {
                (T::lit(2.0) / length).sqrt() * (T::pi() * T::usize(l + 1) * x[0] / length).sin()
            }
            Self::PoschlTeller { s } => {
                let (sh, th) = (sech(x[0]), x[0].tanh());
                let seven = T::lit(7.0);
                match l {
                    0 => sh.powi(s as i32),
                    1 => sh.powi(3) * th,
                    2 => sh * sh * (seven * th * th - T::one()),
                    _ => sh * th * (seven * th * th - T::lit(3.0)),
                }
            }
            Self::Hydrogen => (-norm(x)).exp(),
        })
    }

    /// `∇ψ_ℓ(x)`.
    pub fn eigenfunction_gradient(&self, l: usize, x: &[T]) -> Option<Vec<T>> {
        self.energy(l)?;
        Some(match *self {
            Self::Harmonic { omega } => {
                let z = omega.sqrt() * x[0];
                let e = harmonic_norm::<T>(l, omega) * (-omega * x[0] * x[0] / T::lit(2.0)).exp();
                vec![e * (-omega * x[0] * hermite(l, z) + omega.sqrt() * hermite_derivative(l, z))]
            }
            Self::Box { length } => {
                let k = T::pi() * T::usize(l + 1) / length;
                vec![(T::lit(2.0) / length).sqrt() * k * (k * x[0]).cos()]
            }
            Self::PoschlTeller { s } => {
                let (sh, th) = (sech(x[0]), x[0].tanh());
                let (s2, t2) = (sh * sh, th * th);
                let seven = T::lit(7.0);
                vec![match l {
                    0 => -T::lit(s as f64) * sh.powi(s as i32) * th,
                    1 => -T::lit(3.0) * sh.powi(3) * t2 + sh.powi(5),
                    2 => -T::lit(2.0) * s2 * th * (seven * t2 - T::one()) + T::lit(14.0) * th * s2 * s2,
                    _ => {
                        let p = seven * t2 - T::lit(3.0);
                        sh * (-t2 * p + s2 * p + T::lit(14.0) * t2 * s2)
                    }
                }]
            }
            Self::Hydrogen => {
                let r = norm(x);
                let e = (-r).exp();
                x.iter().map(|&xi| -e * xi / r).collect()
            }
        })
    }

    /// Log of the (unnormalized) ground state, `R = log ψ₀`.
    pub fn ground_log_amplitude(&self, x: &[T]) -> T {
        match *self {
            Self::Harmonic { omega } => -omega * x[0] * x[0] / T::lit(2.0),
            Self::Box { length } => {
                if x[0] > T::zero() && x[0] < length {
                    (T::pi() * x[0] / length).sin().ln()
                } else {
                    T::nan()
                }
            }
            Self::PoschlTeller { s } => T::lit(s as f64) * sech(x[0]).ln(),
            Self::Hydrogen => -norm(x),
        }
    }

    /// `∇R`, written into `out`; NaN outside the domain.
    pub fn ground_log_gradient(&self, x: &[T], out: &mut [T]) {
        match *self {
            Self::Harmonic { omega } => out[0] = -omega * x[0],
            Self::Box { length } => {
                out[0] = if x[0] > T::zero() && x[0] < length {
                    let k = T::pi() / length;
                    k / (k * x[0]).tan()
                } else {
                    T::nan()
                }
            }
            Self::PoschlTeller { s } => out[0] = -T::lit(s as f64) * x[0].tanh(),
            Self::Hydrogen => {
                let r = norm(x);
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = -xi / r;
                }
            }
        }
    }

    /// `ΔR`.
    pub fn ground_log_laplacian(&self, x: &[T]) -> T {
        match *self {
            Self::Harmonic { omega } => -omega,
            Self::Box { length } => {
                let k = T::pi() / length;
                let sn = (k * x[0]).sin();
                -k * k / (sn * sn)
            }
            Self::PoschlTeller { s } => {
                let sh = sech(x[0]);
                -T::lit(s as f64) * sh * sh
            }
            Self::Hydrogen => -T::lit(2.0) / norm(x),
        }
    }

    pub fn ground_state(&self) -> WaveFunctionRS<T> {
        let (a, b) = (*self, *self);
        WaveFunctionRS::positive_stationary(
            self.dim(),
            self.ground_energy(),
            move |x| a.ground_log_amplitude(x),
            move |x, out| b.ground_log_gradient(x, out),
        )
    }

    /// `ψ_ℓ(x) e^{−iE_ℓ t}` in polar form.
    pub fn eigenstate(&self, l: usize) -> Result<WaveFunctionRS<T>> {
        let e = self.energy(l).ok_or_else(|| Error::InvalidInput(format!("state {l} is not tabulated")))?;
        if l == 0 {
            return Ok(self.ground_state());
        }
        let (a, b) = (*self, *self);
        Ok(WaveFunctionRS::real_stationary(
            self.dim(),
            e,
            move |x| a.eigenfunction(l, x).unwrap_or(T::nan()),
            move |x, out| {
                if let Some(g) = b.eigenfunction_gradient(l, x) {
                    out.copy_from_slice(&g);
                }
            },
        ))
    }

    /// Ground-state diffusion `dX = ∇R dt + dB`.
    pub fn to_sde(&self) -> DriftDiffusionSpec<T> {
        let sys = *self;
        DriftDiffusionSpec::new(self.dim(), T::one(), move |x, _t, out| sys.ground_log_gradient(x, out))
            .expect("unit diffusion is valid")
    }

    /// Spectrum of the ground-state generator, `λ_ℓ = E₀ − E_ℓ`.
    pub fn generator_eigenvalue(&self, l: usize) -> Option<T> {
        Some(self.ground_energy() - self.energy(l)?)
    }
}

fn harmonic_norm<T: Real>(l: usize, omega: T) -> T {
    let fact: f64 = (1..=l).map(|k| k as f64).product();
    (omega / T::lit(PI)).powf(T::lit(0.25)) / T::lit((2f64.powi(l as i32) * fact).sqrt())
}
