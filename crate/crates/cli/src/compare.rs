use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, Result};

/// Default tolerances, used for reference metrics that carry none.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-12, rel: 0.0 }
    }
}

impl Tolerance {
    fn admits(&self, expected: f64, actual: f64) -> bool {
        (actual - expected).abs() <= self.abs.max(self.rel * expected.abs())
    }
}

/// Comparison of one scalar (or one array entry).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricGap {
    pub metric: String,
    pub index: Option<usize>,
    pub expected: f64,
    pub actual: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub tolerance: Tolerance,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub gaps: Vec<MetricGap>,
    pub passed: bool,
}

/// Compares a `results.json` document against a reference. Reference
/// metrics are either plain numbers/arrays (checked with `fallback`) or
/// objects `{"value": …, "abs_tol": …, "rel_tol": …}`. Every reference
/// metric must exist in the results with the same shape.
pub fn compare_to_reference(results: &Value, reference: &Value, fallback: Tolerance) -> Result<Comparison> {
    if let (Some(a), Some(b)) = (results.get("experiment"), reference.get("experiment")) {
        if a != b {
            return Err(CliError::Schema(format!("results are for {a}, reference is for {b}")));
        }
    }
    let actual = results
        .get("metrics")
        .and_then(Value::as_object)
        .ok_or_else(|| CliError::Schema("results have no `metrics` object".into()))?;
    let expected = reference
        .get("metrics")
        .and_then(Value::as_object)
        .ok_or_else(|| CliError::Schema("reference has no `metrics` object".into()))?;
    let mut gaps = vec![];
    for (name, spec) in expected {
        let (want, tol) = match spec {
            Value::Object(o) => {
                let value = o.get("value").ok_or_else(|| CliError::Schema(format!("reference `{name}` lacks a value")))?;
                let tol = Tolerance {
                    abs: o.get("abs_tol").and_then(Value::as_f64).unwrap_or(0.0),
                    rel: o.get("rel_tol").and_then(Value::as_f64).unwrap_or(0.0),
                };
                (value, tol)
            }
            v => (v, fallback),
        };
        let have = actual.get(name).ok_or_else(|| CliError::Schema(format!("results lack metric `{name}`")))?;
        let (want, have) = (numbers(name, want)?, numbers(name, have)?);
        if want.len() != have.len() {
            return Err(CliError::Schema(format!("`{name}` has {} entries, reference has {}", have.len(), want.len())));
        }
        let indexed = want.len() > 1 || matches!(spec, Value::Array(_)) || spec.get("value").is_some_and(Value::is_array);
        for (i, (e, a)) in want.iter().zip(&have).enumerate() {
            let abs_gap = (a - e).abs();
            gaps.push(MetricGap {
                metric: name.clone(),
                index: indexed.then_some(i),
                expected: *e,
                actual: *a,
                abs_gap,
                rel_gap: if *e == 0.0 { abs_gap } else { abs_gap / e.abs() },
                tolerance: tol,
                passed: tol.admits(*e, *a),
            });
        }
    }
    let passed = gaps.iter().all(|g| g.passed);
    Ok(Comparison { gaps, passed })
}

fn numbers(name: &str, v: &Value) -> Result<Vec<f64>> {
    let bad = || CliError::Schema(format!("`{name}` is not a number or an array of numbers"));
    match v {
        Value::Number(n) => Ok(vec![n.as_f64().ok_or_else(bad)?]),
        Value::Array(items) => items.iter().map(|x| x.as_f64().ok_or_else(bad)).collect(),
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;

    fn results(l0: f64) -> Value {
        json!({ "experiment": "dmd-real", "metrics": { "lambda": [l0, 1.5], "rank": 100 } })
    }

    #[test]
    fn identical_documents_pass() {
        let r = results(0.5);
        let c = compare_to_reference(&r, &r, Tolerance::default()).unwrap();
        assert!(c.passed);
        assert_eq!(c.gaps.len(), 3);
    }

    #[test]
    fn large_gap_fails_with_report() {
        let reference = json!({ "metrics": { "lambda": { "value": [0.5, 1.5], "abs_tol": 0.02 } } });
        let c = compare_to_reference(&results(1.0), &reference, Tolerance::default()).unwrap();
        assert!(!c.passed);
        let g = &c.gaps[0];
        assert_eq!(g.index, Some(0));
        assert!((g.abs_gap - 0.5).abs() < 1e-12 && (g.rel_gap - 1.0).abs() < 1e-12);
        assert!(c.gaps[1].passed);
    }

    #[test]
    fn schema_mismatches_are_errors() {
        let missing = json!({ "metrics": { "energy": 1.0 } });
        assert!(matches!(compare_to_reference(&results(0.5), &missing, Tolerance::default()), Err(CliError::Schema(_))));
        let short = json!({ "metrics": { "lambda": [0.5] } });
        assert!(compare_to_reference(&results(0.5), &short, Tolerance::default()).is_err());
        let other = json!({ "experiment": "dmd-imag", "metrics": {} });
        assert!(compare_to_reference(&results(0.5), &other, Tolerance::default()).is_err());
    }
}
