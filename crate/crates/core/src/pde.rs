//! One-dimensional finite-difference Schrödinger operators, RK4 propagation
//! in real and imaginary time, and indicator-function training data.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use crate::sde::{trajectory_rng, TrajectoryEnsemble};

/// Equidistant grid including both endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid1D<T: Real> {
    pub lower: T,
    pub upper: T,
    pub points: Vec<T>,
}

impl<T: Real> Grid1D<T> {
    pub fn new(lower: T, upper: T, n_points: usize) -> Result<Self> {
        if n_points < 3 {
            return Err(invalid("grid needs at least three points"));
        }
        if !(upper > lower) {
            return Err(invalid("grid upper bound must exceed lower bound"));
        }
        let dx = (upper - lower) / T::usize(n_points - 1);
        let points = (0..n_points).map(|i| lower + dx * T::usize(i)).collect();
        Ok(Self { lower, upper, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> T {
        (self.upper - self.lower) / T::usize(self.points.len() - 1)
    }
}

/// `H = −½ L_Δx + diag(W)` with homogeneous Dirichlet conditions outside the
/// grid. Stored as a symmetric tridiagonal matrix.
#[derive(Clone, Debug)]
pub struct DiscreteHamiltonian<T: Real> {
    pub grid: Grid1D<T>,
    pub potential: Vec<T>,
    diag: Vec<T>,
    off: T,
}

pub fn build_hamiltonian<T: Real>(grid: &Grid1D<T>, w: impl Fn(T) -> T) -> Result<DiscreteHamiltonian<T>> {
    let dx = grid.spacing();
    let kin = T::one() / (dx * dx);
    let potential: Vec<T> = grid.points.iter().map(|&x| w(x)).collect();
    if let Some(i) = potential.iter().position(|v| !v.finite()) {
        return Err(invalid(format!("potential is not finite at grid point {i}")));
    }
    let diag = potential.iter().map(|&v| kin + v).collect();
    Ok(DiscreteHamiltonian { grid: grid.clone(), potential, diag, off: -kin / T::lit(2.0) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeMode {
    Real,
    Imaginary,
}

impl<T: Real> DiscreteHamiltonian<T> {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn matrix(&self) -> DMatrix<T> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i.abs_diff(j) == 1 {
                self.off
            } else {
                T::zero()
            }
        })
    }

    /// Eigenvalues ascending with orthonormal eigenvectors as columns.
    pub fn eigen(&self) -> (Vec<T>, DMatrix<T>) {
        let eig = nalgebra::SymmetricEigen::new(self.matrix());
        let mut idx: Vec<usize> = (0..self.dim()).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
        let cols: Vec<_> = idx.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
        (values, DMatrix::from_columns(&cols))
    }

    /// Gershgorin bound on the spectral radius.
    pub fn spectral_bound(&self) -> T {
        let two_off = T::lit(2.0) * self.off.abs();
        self.diag.iter().fold(T::zero(), |m, &d| m.max(d.abs() + two_off))
    }

    fn apply(&self, x: &[Complex<T>], out: &mut [Complex<T>]) {
        let n = x.len();
        for i in 0..n {
            let mut v = x[i] * self.diag[i];
            if i > 0 {
                v += x[i - 1] * self.off;
            }
            if i + 1 < n {
                v += x[i + 1] * self.off;
            }
            out[i] = v;
        }
    }

    /// Number of RK4 substeps and their size for one propagation.
    fn substeps(&self, dt: T, rtol: T, mode: TimeMode) -> Result<(usize, T)> {
        let span = dt.abs();
        let dx = self.grid.spacing();
        let lambda = self.spectral_bound().max(T::one());
        let mut h = span.min(T::lit(0.1) * dx * dx);
        // local error bounds per unit step for the stiffest mode
        let (pow, denom) = match mode {
            TimeMode::Real => (6, T::lit(144.0)),
            TimeMode::Imaginary => (5, T::lit(120.0)),
        };
        loop {
            let n = (span / h).ceil().max(T::one());
            let err = n * (h * lambda).powi(pow) / denom;
            if err < rtol {
                break;
            }
            h *= T::lit(0.8);
            if h < T::lit(1e-8) {
                return Err(Error::StepSizeUnderflow(h.to_f64_lossy()));
            }
        }
        if h < T::lit(1e-8) {
            return Err(Error::StepSizeUnderflow(h.to_f64_lossy()));
        }
        let n = (span / h).to_f64_lossy().ceil().max(1.0) as usize;
        Ok((n, dt / T::usize(n)))
    }

    fn rk4(&self, psi0: &DVector<Complex<T>>, dt: T, rtol: T, mode: TimeMode) -> Result<DVector<Complex<T>>> {
        if psi0.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: psi0.len() });
        }
        if !(rtol > T::zero()) {
            return Err(invalid("rtol must be positive"));
        }
        if dt == T::zero() {
            return Ok(psi0.clone());
        }
        let (n, h) = self.substeps(dt, rtol, mode)?;
        // ψ' = c H ψ with c = −i (real time) or −1 (imaginary time)
        let c = match mode {
            TimeMode::Real => Complex::new(T::zero(), -h),
            TimeMode::Imaginary => Complex::new(-h, T::zero()),
        };
        let d = self.dim();
        let half = T::lit(0.5);
        let zero = Complex::new(T::zero(), T::zero());
        let mut y = psi0.as_slice().to_vec();
        let (mut k1, mut k2, mut k3, mut k4) = (vec![zero; d], vec![zero; d], vec![zero; d], vec![zero; d]);
        let mut tmp = vec![zero; d];
        let sixth = T::one() / T::lit(6.0);
        let two = T::lit(2.0);
        let stage = |x: &[Complex<T>], out: &mut [Complex<T>]| {
            self.apply(x, out);
            out.iter_mut().for_each(|z| *z *= c);
        };
        for _ in 0..n {
            stage(&y, &mut k1);
            for i in 0..d {
                tmp[i] = y[i] + k1[i] * half;
            }
            stage(&tmp, &mut k2);
            for i in 0..d {
                tmp[i] = y[i] + k2[i] * half;
            }
            stage(&tmp, &mut k3);
            for i in 0..d {
                tmp[i] = y[i] + k3[i];
            }
            stage(&tmp, &mut k4);
            for i in 0..d {
                y[i] += (k1[i] + (k2[i] + k3[i]) * two + k4[i]) * sixth;
            }
        }
        Ok(DVector::from_vec(y))
    }
}

/// Solves `i ψ' = H ψ` over `Δt` (any sign) with classical RK4.
pub fn propagate_real_time<T: Real>(
    h: &DiscreteHamiltonian<T>,
    psi0: &DVector<Complex<T>>,
    dt: T,
    rtol: T,
) -> Result<DVector<Complex<T>>> {
    h.rk4(psi0, dt, rtol, TimeMode::Real)
}

/// Solves `ψ' = −H ψ` over `Δτ ≥ 0` with classical RK4.
pub fn propagate_imaginary_time<T: Real>(
    h: &DiscreteHamiltonian<T>,
    psi0: &DVector<Complex<T>>,
    dtau: T,
    rtol: T,
) -> Result<DVector<Complex<T>>> {
    if dtau < T::zero() {
        return Err(invalid("imaginary-time step must be nonnegative"));
    }
    h.rk4(psi0, dtau, rtol, TimeMode::Imaginary)
}

/// Paired snapshots `(Ψ₀, Ψ_Δt)`, one column per initial condition.
#[derive(Clone, Debug)]
pub struct DmdDataset<T: Real> {
    pub x: DMatrix<Complex<T>>,
    pub y: DMatrix<Complex<T>>,
    pub dt: T,
    pub mode: TimeMode,
    /// Inclusive grid-index ranges of the indicator initial conditions.
    pub intervals: Vec<(usize, usize)>,
}

/// Indicator vector of grid indices `lo..=hi`.
pub fn indicator_column<T: Real>(n: usize, lo: usize, hi: usize) -> DVector<Complex<T>> {
    DVector::from_fn(n, |i, _| {
        if (lo..=hi).contains(&i) {
            Complex::new(T::one(), T::zero())
        } else {
            Complex::new(T::zero(), T::zero())
        }
    })
}

/// Propagates given initial columns.
pub fn propagate_columns<T: Real>(
    h: &DiscreteHamiltonian<T>,
    x: &DMatrix<Complex<T>>,
    dt: T,
    mode: TimeMode,
    rtol: T,
) -> Result<DMatrix<Complex<T>>> {
    let cols: Vec<Result<DVector<Complex<T>>>> = (0..x.ncols())
        .into_par_iter()
        .map(|j| {
            let c = x.column(j).into_owned();
            match mode {
                TimeMode::Real => propagate_real_time(h, &c, dt, rtol),
                TimeMode::Imaginary => propagate_imaginary_time(h, &c, dt, rtol),
            }
        })
        .collect();
    let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&cols))
}

/// Draws `m` random indicator initial conditions on grid intervals and
/// propagates each over `Δt`.
pub fn generate_dmd_dataset<T: Real>(
    h: &DiscreteHamiltonian<T>,
    m: usize,
    dt: T,
    mode: TimeMode,
    seed: u64,
    rtol: T,
) -> Result<DmdDataset<T>> {
    if m == 0 {
        return Err(invalid("at least one initial condition is required"));
    }
    let n = h.dim();
    let mut rng = trajectory_rng(seed, 0);
    let mut intervals = Vec::with_capacity(m);
    while intervals.len() < m {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            intervals.push((a.min(b), a.max(b)));
        }
    }
    let cols: Vec<_> = intervals.iter().map(|&(lo, hi)| indicator_column::<T>(n, lo, hi)).collect();
    let x = DMatrix::from_columns(&cols);
    let y = propagate_columns(h, &x, dt, mode, rtol)?;
    Ok(DmdDataset { x, y, dt, mode, intervals })
}

impl<T: Real> DmdDataset<T> {
    /// Writes `x` and `y` side by side as CSV: one row per grid point, with
    /// columns `x{j}_re, x{j}_im` followed by `y{j}_re, y{j}_im`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let m = self.x.ncols();
        let mut header = Vec::with_capacity(4 * m);
        for name in ["x", "y"] {
            for j in 0..m {
                header.push(format!("{name}{j}_re"));
                header.push(format!("{name}{j}_im"));
            }
        }
        out.write_record(&header)?;
        for i in 0..self.x.nrows() {
            let mut row = Vec::with_capacity(4 * m);
            for mat in [&self.x, &self.y] {
                for j in 0..m {
                    row.push(mat[(i, j)].re.to_f64_lossy().to_string());
                    row.push(mat[(i, j)].im.to_f64_lossy().to_string());
                }
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Packs the pairs into the ensemble container: one "trajectory" per
    /// initial condition, two time points, state `(re, im)` interleaved.
    pub fn to_ensemble(&self, seed: u64) -> TrajectoryEnsemble<T> {
        let (d, m) = self.x.shape();
        let mut states = Vec::with_capacity(m * 2 * 2 * d);
        for j in 0..m {
            for mat in [&self.x, &self.y] {
                for i in 0..d {
                    states.push(mat[(i, j)].re);
                    states.push(mat[(i, j)].im);
                }
            }
        }
        TrajectoryEnsemble {
            dim: 2 * d,
            n_traj: m,
            n_steps: 2,
            times: vec![T::zero(), self.dt],
            step_size: self.dt,
            seed,
            states,
        }
    }
}
