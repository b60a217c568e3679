//! Observable dictionaries `Φ = (φ₁, …, φₙ)` with analytic gradients and
//! Laplacians.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Radius below which radial observables are treated as singular.
pub const RADIUS_FLOOR: f64 = 1e-8;

pub type CustomEval<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;
pub type CustomGrad<T> = Arc<dyn Fn(&[T], &mut [T]) + Send + Sync>;

/// A single observable.
#[derive(Clone)]
pub enum Term<T: Real> {
    /// `∏ x_i^{e_i}`.
    Monomial(Vec<u32>),
    /// `exp(−‖x − c‖² / (2ς²))`.
    Gaussian { center: Vec<T>, bandwidth: T },
    /// Indicator of the half-open box `[lower, upper)`.
    Indicator { lower: Vec<T>, upper: Vec<T> },
    /// Monomial times `‖x‖^power` with `power = ±1`.
    Radial { exponents: Vec<u32>, power: i32 },
    /// User-supplied observable with optional derivatives.
    Custom { eval: CustomEval<T>, grad: Option<CustomGrad<T>>, laplacian: Option<CustomEval<T>> },
}

impl<T: Real> std::fmt::Debug for Term<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Term::Monomial(e) => f.debug_tuple("Monomial").field(e).finish(),
            Term::Gaussian { center, bandwidth } => {
                f.debug_struct("Gaussian").field("center", center).field("bandwidth", bandwidth).finish()
            }
            Term::Indicator { lower, upper } => {
                f.debug_struct("Indicator").field("lower", lower).field("upper", upper).finish()
            }
            Term::Radial { exponents, power } => {
                f.debug_struct("Radial").field("exponents", exponents).field("power", power).finish()
            }
            Term::Custom { .. } => f.write_str("Custom"),
        }
    }
}

fn monomial_value<T: Real>(e: &[u32], x: &[T]) -> T {
    e.iter().zip(x).fold(T::one(), |acc, (&p, &xi)| acc * xi.powi(p as i32))
}

fn monomial_grad<T: Real>(e: &[u32], x: &[T], out: &mut [T]) {
    for i in 0..e.len() {
        out[i] = if e[i] == 0 {
            T::zero()
        } else {
            let mut v = T::usize(e[i] as usize) * x[i].powi(e[i] as i32 - 1);
            for (j, (&p, &xj)) in e.iter().zip(x).enumerate() {
                if j != i {
                    v *= xj.powi(p as i32);
                }
            }
            v
        };
    }
}

fn monomial_laplacian<T: Real>(e: &[u32], x: &[T]) -> T {
    let mut total = T::zero();
    for i in 0..e.len() {
        if e[i] < 2 {
            continue;
        }
        let mut v = T::usize((e[i] * (e[i] - 1)) as usize) * x[i].powi(e[i] as i32 - 2);
        for (j, (&p, &xj)) in e.iter().zip(x).enumerate() {
            if j != i {
                v *= xj.powi(p as i32);
            }
        }
        total += v;
    }
    total
}

fn radius<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |a, &v| a + v * v).sqrt()
}

impl<T: Real> Term<T> {
    fn has_derivatives(&self) -> bool {
        match self {
            Term::Indicator { .. } => false,
            Term::Custom { grad, laplacian, .. } => grad.is_some() && laplacian.is_some(),
            _ => true,
        }
    }

    fn eval(&self, x: &[T]) -> Result<T> {
        Ok(match self {
            Term::Monomial(e) => monomial_value(e, x),
            Term::Gaussian { center, bandwidth } => {
                let d2 = x.iter().zip(center).fold(T::zero(), |a, (&xi, &ci)| a + (xi - ci) * (xi - ci));
                (-d2 / (T::lit(2.0) * *bandwidth * *bandwidth)).exp()
            }
            Term::Indicator { lower, upper } => {
                let inside = x.iter().zip(lower.iter().zip(upper)).all(|(&xi, (&lo, &hi))| xi >= lo && xi < hi);
                if inside {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Term::Radial { exponents, power } => {
                let r = radius(x);
                if *power < 0 && r < T::lit(RADIUS_FLOOR) {
                    return Err(Error::SingularObservable(r.to_f64_lossy()));
                }
                monomial_value(exponents, x) * r.powi(*power)
            }
            Term::Custom { eval, .. } => eval(x),
        })
    }

    fn grad(&self, x: &[T], out: &mut [T]) -> Result<()> {
        match self {
            Term::Monomial(e) => monomial_grad(e, x, out),
            Term::Gaussian { center, bandwidth } => {
                let phi = self.eval(x)?;
                let s2 = *bandwidth * *bandwidth;
                for i in 0..x.len() {
                    out[i] = -(x[i] - center[i]) / s2 * phi;
                }
            }
            Term::Indicator { .. } => return Err(Error::DerivativesUnavailable),
            Term::Radial { exponents, power } => {
                let r = radius(x);
                if r < T::lit(RADIUS_FLOOR) {
                    return Err(Error::SingularObservable(r.to_f64_lossy()));
                }
                let k = T::lit(*power as f64);
                let m = monomial_value(exponents, x);
                monomial_grad(exponents, x, out);
                let rk = r.powi(*power);
                let rk2 = r.powi(*power - 2);
                for i in 0..x.len() {
                    out[i] = rk * out[i] + m * k * rk2 * x[i];
                }
            }
            Term::Custom { grad, .. } => match grad {
                Some(g) => g(x, out),
                None => return Err(Error::DerivativesUnavailable),
            },
        }
        Ok(())
    }

    fn laplacian(&self, x: &[T]) -> Result<T> {
        Ok(match self {
            Term::Monomial(e) => monomial_laplacian(e, x),
            Term::Gaussian { center, bandwidth } => {
                let phi = self.eval(x)?;
                let s2 = *bandwidth * *bandwidth;
                let d2 = x.iter().zip(center).fold(T::zero(), |a, (&xi, &ci)| a + (xi - ci) * (xi - ci));
                phi * (d2 / (s2 * s2) - T::usize(x.len()) / s2)
            }
            Term::Indicator { .. } => return Err(Error::DerivativesUnavailable),
            Term::Radial { exponents, power } => {
                let r = radius(x);
                if r < T::lit(RADIUS_FLOOR) {
                    return Err(Error::SingularObservable(r.to_f64_lossy()));
                }
                // Δ(m r^k) = r^k Δm + m r^{k−2} (2k deg(m) + k(k + d − 2))
                let k = *power as f64;
                let deg: u32 = exponents.iter().sum();
                let d = x.len() as f64;
                let m = monomial_value(exponents, x);
                r.powi(*power) * monomial_laplacian(exponents, x)
                    + m * r.powi(*power - 2) * T::lit(2.0 * k * deg as f64 + k * (k + d - 2.0))
            }
            Term::Custom { laplacian, .. } => match laplacian {
                Some(l) => l(x),
                None => return Err(Error::DerivativesUnavailable),
            },
        })
    }
}

/// Ordered set of observables with labels and named index groups.
#[derive(Clone, Debug)]
pub struct Dictionary<T: Real> {
    dim: usize,
    terms: Vec<Term<T>>,
    labels: Vec<String>,
    index_map: BTreeMap<String, Vec<usize>>,
}

/// Exponent vectors of total degree `≤ p`, graded by degree and
/// lexicographically descending within a degree (constant first).
pub fn graded_lex_exponents(d: usize, p: u32) -> Vec<Vec<u32>> {
    fn fill(d: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == d - 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e);
            fill(d, remaining - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if d == 0 {
        return out;
    }
    for deg in 0..=p {
        fill(d, deg, &mut Vec::with_capacity(d), &mut out);
    }
    out
}

fn monomial_label(e: &[u32]) -> String {
    let mut parts = Vec::new();
    for (i, &p) in e.iter().enumerate() {
        if p == 0 {
            continue;
        }
        let var = if e.len() == 1 { "x".to_string() } else { format!("x{}", i + 1) };
        parts.push(if p == 1 { var } else { format!("{var}^{p}") });
    }
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join("*")
    }
}

fn is_unit(e: &[u32], deg: u32) -> Option<usize> {
    let nz: Vec<usize> = (0..e.len()).filter(|&i| e[i] != 0).collect();
    (nz.len() == 1 && e[nz[0]] == deg).then(|| nz[0])
}

impl<T: Real> Dictionary<T> {
    /// Builds a dictionary from explicit terms and labels.
    pub fn from_terms(dim: usize, terms: Vec<Term<T>>, labels: Vec<String>) -> Result<Self> {
        if terms.len() != labels.len() {
            return Err(invalid("one label per term is required"));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self { dim, terms, labels, index_map: BTreeMap::new() })
    }

    /// All monomials of total degree `≤ p` in graded-lex order.
    pub fn monomials(d: usize, p: u32) -> Self {
        let exps = graded_lex_exponents(d, p);
        let labels = exps.iter().map(|e| monomial_label(e)).collect();
        let mut out = Self {
            dim: d,
            terms: exps.iter().cloned().map(Term::Monomial).collect(),
            labels,
            index_map: BTreeMap::new(),
        };
        out.index_map.insert("const".into(), vec![0]);
        for (name, deg) in [("I1", 1), ("I2", 2)] {
            if p >= deg {
                let mut idx = vec![usize::MAX; d];
                for (k, e) in exps.iter().enumerate() {
                    if let Some(i) = is_unit(e, deg) {
                        idx[i] = k;
                    }
                }
                out.index_map.insert(name.into(), idx);
            }
        }
        out
    }

    /// Gaussians centred at the columns of `centers` (`d × n`).
    pub fn gaussians(centers: &DMatrix<T>, bandwidth: T) -> Result<Self> {
        if !(bandwidth > T::zero()) {
            return Err(invalid("bandwidth must be positive"));
        }
        let terms = centers
            .column_iter()
            .map(|c| Term::Gaussian { center: c.iter().copied().collect(), bandwidth })
            .collect();
        let labels = (0..centers.ncols()).map(|k| format!("gauss{k}")).collect();
        Self::from_terms(centers.nrows(), terms, labels)
    }

    /// Indicators of half-open boxes, given as `(lower, upper)` corner pairs.
    pub fn indicators(boxes: &[(Vec<T>, Vec<T>)]) -> Result<Self> {
        let d = boxes.first().map_or(1, |b| b.0.len());
        if boxes.iter().any(|(lo, hi)| lo.len() != d || hi.len() != d) {
            return Err(invalid("all boxes must have the same dimension"));
        }
        let terms = boxes.iter().map(|(lo, hi)| Term::Indicator { lower: lo.clone(), upper: hi.clone() }).collect();
        let labels = (0..boxes.len()).map(|k| format!("box{k}")).collect();
        Self::from_terms(d, terms, labels)
    }

    /// `n` equal bins partitioning `[a, b)` in one dimension.
    pub fn bins(a: T, b: T, n: usize) -> Result<Self> {
        let w = (b - a) / T::usize(n);
        let boxes: Vec<_> =
            (0..n).map(|k| (vec![a + w * T::usize(k)], vec![a + w * T::usize(k + 1)])).collect();
        Self::indicators(&boxes)
    }

    /// Three-dimensional dictionary stacking monomials up to `p`, monomials up
    /// to `p_inv` divided by `‖x‖`, and monomials up to `p_norm` times `‖x‖`.
    pub fn hydrogen_composite(p: u32, p_inv: Option<u32>, p_norm: Option<u32>) -> Result<Self> {
        if p < 2 {
            return Err(invalid("the polynomial block needs degree at least 2"));
        }
        let mut out = Self::monomials(3, p);
        for (deg, power, suffix, name) in [(p_inv, -1, "/r", "I_inv"), (p_norm, 1, "*r", "I_norm")] {
            let Some(deg) = deg else { continue };
            let exps = graded_lex_exponents(3, deg);
            let labels = exps
                .iter()
                .map(|e| {
                    let m = monomial_label(e);
                    match (m.as_str(), power) {
                        ("1", -1) => "1/r".to_string(),
                        ("1", _) => "r".to_string(),
                        _ => format!("{m}{suffix}"),
                    }
                })
                .collect();
            let terms = exps.into_iter().map(|exponents| Term::Radial { exponents, power }).collect();
            let mut block = Self::from_terms(3, terms, labels)?;
            block.index_map.insert(name.into(), vec![0]);
            out = Self::concat(&[out, block])?;
        }
        Ok(out)
    }

    /// Stacks dictionaries; named index groups are shifted and merged.
    pub fn concat(dicts: &[Self]) -> Result<Self> {
        let Some(first) = dicts.first() else {
            return Err(Error::EmptyData);
        };
        let mut out = Self { dim: first.dim, terms: vec![], labels: vec![], index_map: BTreeMap::new() };
        let mut seen = std::collections::HashSet::new();
        for d in dicts {
            if d.dim != out.dim {
                return Err(Error::DimensionMismatch { expected: out.dim, got: d.dim });
            }
            let offset = out.terms.len();
            for l in &d.labels {
                if !seen.insert(l.clone()) {
                    return Err(Error::DuplicateLabel(l.clone()));
                }
            }
            out.terms.extend(d.terms.iter().cloned());
            out.labels.extend(d.labels.iter().cloned());
            for (name, idx) in &d.index_map {
                out.index_map.entry(name.clone()).or_default().extend(idx.iter().map(|i| i + offset));
            }
        }
        Ok(out)
    }

    /// Registers a named index group.
    pub fn with_named(mut self, name: &str, indices: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(invalid(format!("index {bad} out of range for {name}")));
        }
        self.index_map.insert(name.into(), indices);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn terms(&self) -> &[Term<T>] {
        &self.terms
    }

    pub fn index_map(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.index_map
    }

    /// Indices registered under `name`, or `IndexMissing`.
    pub fn indices(&self, name: &str) -> Result<&[usize]> {
        self.index_map.get(name).map(|v| v.as_slice()).ok_or_else(|| Error::IndexMissing(name.into()))
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn has_derivatives(&self) -> bool {
        self.terms.iter().all(|t| t.has_derivatives())
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    pub fn eval_into(&self, x: &[T], out: &mut [T]) -> Result<()> {
        self.check_dim(x)?;
        for (o, t) in out.iter_mut().zip(&self.terms) {
            *o = t.eval(x)?;
        }
        Ok(())
    }

    pub fn eval(&self, x: &[T]) -> Result<DVector<T>> {
        let mut out = DVector::zeros(self.len());
        self.eval_into(x, out.as_mut_slice())?;
        Ok(out)
    }

    /// Jacobian, `n × d`.
    pub fn grad(&self, x: &[T]) -> Result<DMatrix<T>> {
        self.check_dim(x)?;
        let mut out = DMatrix::zeros(self.len(), self.dim);
        let mut row = vec![T::zero(); self.dim];
        for (k, t) in self.terms.iter().enumerate() {
            t.grad(x, &mut row)?;
            for i in 0..self.dim {
                out[(k, i)] = row[i];
            }
        }
        Ok(out)
    }

    pub fn laplacian(&self, x: &[T]) -> Result<DVector<T>> {
        self.check_dim(x)?;
        let mut out = DVector::zeros(self.len());
        for (k, t) in self.terms.iter().enumerate() {
            out[k] = t.laplacian(x)?;
        }
        Ok(out)
    }

    /// Evaluates at every column of `xs` (`d × m`), giving `n × m`.
    pub fn eval_matrix(&self, xs: &DMatrix<T>) -> Result<DMatrix<T>> {
        if xs.nrows() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: xs.nrows() });
        }
        let mut out = DMatrix::zeros(self.len(), xs.ncols());
        for (j, col) in xs.column_iter().enumerate() {
            let x: Vec<T> = col.iter().copied().collect();
            let mut c = out.column_mut(j);
            for (k, t) in self.terms.iter().enumerate() {
                c[k] = t.eval(&x)?;
            }
        }
        Ok(out)
    }

    /// Generator applied to the dictionary at each column of `xs`:
    /// `b(x)·∇φ + (σ²/2) Δφ`, with drift values supplied as `d × m`.
    pub fn generator_matrix(&self, xs: &DMatrix<T>, drift: &DMatrix<T>, sigma: T) -> Result<DMatrix<T>> {
        if !self.has_derivatives() {
            return Err(Error::DerivativesUnavailable);
        }
        if drift.shape() != xs.shape() {
            return Err(Error::DimensionMismatch { expected: xs.ncols(), got: drift.ncols() });
        }
        let half_s2 = sigma * sigma / T::lit(2.0);
        let mut out = DMatrix::zeros(self.len(), xs.ncols());
        for j in 0..xs.ncols() {
            let x: Vec<T> = xs.column(j).iter().copied().collect();
            let g = self.grad(&x)?;
            let l = self.laplacian(&x)?;
            let v = g * drift.column(j) + l * half_s2;
            out.set_column(j, &v);
        }
        Ok(out)
    }
}

/// Serializable dictionary descriptor used in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DictionarySpec {
    Monomials { dim: usize, degree: u32 },
    /// Equispaced centres on `[lower, upper]` in one dimension.
    Gaussians { lower: f64, upper: f64, count: usize, bandwidth: f64 },
    Bins { lower: f64, upper: f64, count: usize },
    Hydrogen { p: u32, p_inv: Option<u32>, p_norm: Option<u32> },
}

impl DictionarySpec {
    pub fn build<T: Real>(&self) -> Result<Dictionary<T>> {
        match *self {
            DictionarySpec::Monomials { dim, degree } => Ok(Dictionary::monomials(dim, degree)),
            DictionarySpec::Gaussians { lower, upper, count, bandwidth } => {
                if count < 2 {
                    return Err(invalid("at least two Gaussian centres are required"));
                }
                let step = (upper - lower) / (count - 1) as f64;
                let c = DMatrix::from_fn(1, count, |_, k| T::lit(lower + step * k as f64));
                Dictionary::gaussians(&c, T::lit(bandwidth))
            }
            DictionarySpec::Bins { lower, upper, count } => Dictionary::bins(T::lit(lower), T::lit(upper), count),
            DictionarySpec::Hydrogen { p, p_inv, p_norm } => Dictionary::hydrogen_composite(p, p_inv, p_norm),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_monomials() {
        let d = Dictionary::<f64>::monomials(1, 3);
        assert_eq!(d.labels(), ["1", "x", "x^2", "x^3"]);
        assert_eq!(d.eval(&[2.0]).unwrap().as_slice(), &[1.0, 2.0, 4.0, 8.0]);
        assert_eq!(d.grad(&[3.0]).unwrap()[(2, 0)], 6.0);
        assert_eq!(d.indices("I2").unwrap(), &[2]);
    }

    #[test]
    fn graded_lex_order_in_two_dimensions() {
        let d = Dictionary::<f64>::monomials(2, 2);
        assert_eq!(d.labels(), ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2"]);
        assert_eq!(d.indices("I1").unwrap(), &[1, 2]);
        assert_eq!(d.indices("I2").unwrap(), &[3, 5]);
        assert_eq!(Dictionary::<f64>::monomials(3, 2).len(), 10);
    }

    #[test]
    fn gaussian_values_and_laplacian() {
        let c = DMatrix::from_row_slice(1, 2, &[0.0f64, 1.0]);
        let d = Dictionary::gaussians(&c, 0.5).unwrap();
        assert_eq!(d.eval(&[1.0]).unwrap()[1], 1.0);
        assert!((d.laplacian(&[0.0]).unwrap()[0] + 4.0).abs() < 1e-12);
        let spec = DictionarySpec::Gaussians { lower: -5.0, upper: 5.0, count: 100, bandwidth: 0.5 };
        assert_eq!(spec.build::<f64>().unwrap().len(), 100);
    }

    #[test]
    fn bins_select_one_box() {
        let d = Dictionary::<f64>::bins(0.0, 1.0, 10).unwrap();
        let v = d.eval(&[0.35]).unwrap();
        let mut e = DVector::zeros(10);
        e[3] = 1.0;
        assert_eq!(v, e);
        assert_eq!(d.eval(&[1.5]).unwrap(), DVector::zeros(10));
        assert!(matches!(d.grad(&[0.2]), Err(Error::DerivativesUnavailable)));
        assert!(!d.has_derivatives());
    }

    #[test]
    fn hydrogen_dictionaries() {
        let plain = Dictionary::<f64>::hydrogen_composite(2, None, None).unwrap();
        assert_eq!(plain.len(), 10);
        assert!(plain.indices("I_inv").is_err());
        let full = Dictionary::<f64>::hydrogen_composite(2, Some(0), Some(0)).unwrap();
        assert_eq!(full.len(), 12);
        let v = full.eval(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(v[full.indices("I_inv").unwrap()[0]], 1.0);
        assert_eq!(v[full.indices("I_norm").unwrap()[0]], 1.0);
        assert!(matches!(full.eval(&[0.0, 0.0, 0.0]), Err(Error::SingularObservable(_))));
        let big = Dictionary::<f64>::hydrogen_composite(3, Some(1), Some(1)).unwrap();
        assert_eq!(big.len(), 20 + 4 + 4);
        assert_eq!(big.labels()[21], "x1/r");
    }

    #[test]
    fn concat_offsets_and_duplicates() {
        let a = Dictionary::<f64>::monomials(1, 1);
        let b = Dictionary::from_terms(1, vec![Term::Monomial(vec![2])], vec!["x^2".into()])
            .unwrap()
            .with_named("I2", vec![0])
            .unwrap();
        let c = Dictionary::concat(&[a.clone(), b]).unwrap();
        assert_eq!(c.labels(), ["1", "x", "x^2"]);
        assert_eq!(c.indices("I2").unwrap(), &[2]);
        assert_eq!(c.indices("I1").unwrap(), &[1]);
        assert!(matches!(Dictionary::concat(&[a.clone(), a]), Err(Error::DuplicateLabel(_))));
    }

    #[test]
    fn radial_laplacian_identity() {
        // Δ(1/r) = 0 and Δr = 2/r in three dimensions
        let d = Dictionary::<f64>::hydrogen_composite(2, Some(0), Some(0)).unwrap();
        let x = [0.3, -1.2, 0.7];
        let r = (0.09f64 + 1.44 + 0.49).sqrt();
        let l = d.laplacian(&x).unwrap();
        assert!(l[10].abs() < 1e-12);
        assert!((l[11] - 2.0 / r).abs() < 1e-12);
    }
}
