//! DMD on finite-difference Schrödinger snapshots of the harmonic oscillator.

use koopq_core::estimators::{dmd_eigen_to_energy, dmd_fit, normalize_eigenfunction};
use koopq_core::linalg::eig_complex;
use koopq_core::pde::{build_hamiltonian, generate_dmd_dataset, Grid1D, TimeMode};
use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use super::{put, Outcome};
use crate::error::Result;
use crate::report::{Check, Table};

pub use koopq_core::pde::TimeMode as Mode;

/// Reference eigenvalues for the real-time data set on the default grid.
pub const REFERENCE_REAL_TIME: [f64; 5] = [0.499, 1.498, 2.496, 3.492, 4.487];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub lower: f64,
    pub upper: f64,
    pub grid_points: usize,
    pub snapshots: usize,
    pub dt: f64,
    pub omega: f64,
    pub modes: usize,
    /// Relative SVD cutoff of the pseudoinverse.
    pub truncation: f64,
    /// Norm-drift tolerance of the RK4 propagator.
    pub rtol: f64,
    /// Allowed gap to the analytic and reference eigenvalues.
    pub tolerance: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            lower: -5.0,
            upper: 5.0,
            grid_points: 100,
            snapshots: 200,
            dt: 0.1,
            omega: 1.0,
            modes: 5,
            truncation: 1e-10,
            rtol: 1e-10,
            tolerance: 0.02,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DmdOutput {
    pub mode: Mode,
    pub grid: Vec<f64>,
    pub mu: Vec<Complex<f64>>,
    pub lambda: Vec<Complex<f64>>,
    /// Normalized mode shapes, `grid × modes`.
    pub shapes: DMatrix<f64>,
    /// Energies of the discrete Hamiltonian, for comparison.
    pub grid_energies: Vec<f64>,
}

impl DmdOutput {
    pub fn analytic(&self, omega: f64) -> Vec<f64> {
        (0..self.lambda.len()).map(|l| omega * (l as f64 + 0.5)).collect()
    }
}

/// Discrete Dirichlet energy `Σ|v_{i+1} − v_i|² / Σ|v_i|²` of a mode; low
/// values identify the smooth, low-energy states.
fn roughness(v: &[Complex<f64>]) -> f64 {
    let num: f64 = v.windows(2).map(|w| (w[1] - w[0]).norm_sqr()).sum();
    let den: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    num / den
}

pub fn run(p: &Params, seed: u64, mode: Mode) -> Result<DmdOutput> {
    let grid = Grid1D::new(p.lower, p.upper, p.grid_points)?;
    let omega = p.omega;
    let h = build_hamiltonian(&grid, |x| 0.5 * omega * omega * x * x)?;
    let data = generate_dmd_dataset(&h, p.snapshots, p.dt, mode, seed, p.rtol)?;
    let a = dmd_fit(&data.x, &data.y, p.truncation)?;
    let eig = eig_complex(&a);
    let n = eig.values.len();
    let column = |k: usize| -> Vec<Complex<f64>> { eig.vectors.column(k).iter().copied().collect() };
    let mut order: Vec<usize> = (0..n).filter(|&k| eig.values[k].norm() > p.truncation).collect();
    // In real time every |μ| ≈ 1 and the logarithm aliases high energies
    // onto the principal branch, so modes are ranked by smoothness; in
    // imaginary time the slowest decay is the lowest energy.
    match mode {
        TimeMode::Real => {
            let r: Vec<f64> = (0..n).map(|k| roughness(&column(k))).collect();
            order.sort_by(|&a, &b| r[a].total_cmp(&r[b]));
        }
        TimeMode::Imaginary => order.sort_by(|&a, &b| eig.values[b].norm().total_cmp(&eig.values[a].norm())),
    }
    order.truncate(p.modes);
    let mut picked: Vec<(Complex<f64>, Complex<f64>, Vec<f64>)> = order
        .iter()
        .map(|&k| {
            let mu = eig.values[k];
            let lam = dmd_eigen_to_energy(mu, p.dt, mode)?;
            Ok((mu, lam, normalize_eigenfunction(&column(k))))
        })
        .collect::<Result<_>>()?;
    picked.sort_by(|a, b| a.1.re.total_cmp(&b.1.re));
    let shapes = DMatrix::from_fn(grid.len(), picked.len(), |i, j| picked[j].2[i]);
    Ok(DmdOutput {
        mode,
        grid: grid.points.clone(),
        mu: picked.iter().map(|t| t.0).collect(),
        lambda: picked.iter().map(|t| t.1).collect(),
        shapes,
        grid_energies: h.eigen().0.into_iter().take(p.modes).collect(),
    })
}

pub fn outcome(p: &Params, seed: u64, mode: Mode) -> Result<Outcome> {
    let out = run(p, seed, mode)?;
    let analytic = out.analytic(p.omega);
    let re: Vec<f64> = out.lambda.iter().map(|z| z.re).collect();
    let gap = |reference: &[f64]| re.iter().zip(reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut metrics = serde_json::Map::new();
    put(&mut metrics, "lambda_re", &re);
    put(&mut metrics, "lambda_im", out.lambda.iter().map(|z| z.im).collect::<Vec<_>>());
    put(&mut metrics, "mu_re", out.mu.iter().map(|z| z.re).collect::<Vec<_>>());
    put(&mut metrics, "mu_im", out.mu.iter().map(|z| z.im).collect::<Vec<_>>());
    put(&mut metrics, "analytic", &analytic);
    put(&mut metrics, "grid_energies", &out.grid_energies);
    put(&mut metrics, "max_gap_analytic", gap(&analytic));
    let mut checks = vec![Check::at_most("max gap to analytic", gap(&analytic), p.tolerance)];
    if mode == TimeMode::Real && p.omega == 1.0 && re.len() == REFERENCE_REAL_TIME.len() {
        put(&mut metrics, "max_gap_reference", gap(&REFERENCE_REAL_TIME));
        checks.push(Check::at_most("max gap to reference table", gap(&REFERENCE_REAL_TIME), p.tolerance));
    }
    let mut eigs = Table::new("eigenvalues", &["l", "mu_re", "mu_im", "lambda_re", "lambda_im", "analytic"]);
    for (l, (mu, lam)) in out.mu.iter().zip(&out.lambda).enumerate() {
        eigs.push(vec![l as f64, mu.re, mu.im, lam.re, lam.im, analytic[l]]);
    }
    let mut header = vec!["x".to_string()];
    header.extend((0..out.shapes.ncols()).map(|l| format!("mode{l}")));
    let mut shapes = Table { name: "modes".into(), header, rows: vec![] };
    for (i, x) in out.grid.iter().enumerate() {
        let mut row = vec![*x];
        row.extend(out.shapes.row(i).iter());
        shapes.rows.push(row);
    }
    Ok(Outcome { metrics, checks, tables: vec![eigs, shapes] })
}
