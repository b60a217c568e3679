//! Physicists' Hermite polynomials.

use crate::scalar::Real;

/// `H_ℓ(x)` from the three-term recurrence `H_{ℓ+1} = 2x H_ℓ − 2ℓ H_{ℓ−1}`.
pub fn hermite<T: Real>(l: usize, x: T) -> T {
    let two = T::lit(2.0);
    let (mut prev, mut cur) = (T::one(), two * x);
    if l == 0 {
        return prev;
    }
    for k in 1..l {
        let next = two * x * cur - two * T::usize(k) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `H_0(x), …, H_n(x)`.
pub fn hermite_all<T: Real>(n: usize, x: T) -> Vec<T> {
    let two = T::lit(2.0);
    let mut out = Vec::with_capacity(n + 1);
    out.push(T::one());
    if n >= 1 {
        out.push(two * x);
    }
    for k in 1..n {
        let next = two * x * out[k] - two * T::usize(k) * out[k - 1];
        out.push(next);
    }
    out
}

/// `H_ℓ'(x) = 2ℓ H_{ℓ−1}(x)`.
pub fn hermite_derivative<T: Real>(l: usize, x: T) -> T {
    if l == 0 {
        T::zero()
    } else {
        T::lit(2.0) * T::usize(l) * hermite(l - 1, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_orders_match_closed_forms() {
        for &x in &[-1.5f64, 0.0, 0.3, 2.0] {
            assert_eq!(hermite(0, x), 1.0);
            assert_eq!(hermite(1, x), 2.0 * x);
            assert!((hermite(2, x) - (4.0 * x * x - 2.0)).abs() < 1e-12);
            assert!((hermite(3, x) - (8.0 * x.powi(3) - 12.0 * x)).abs() < 1e-12);
            assert!((hermite(4, x) - (16.0 * x.powi(4) - 48.0 * x * x + 12.0)).abs() < 1e-11);
        }
    }

    #[test]
    fn batch_agrees_with_single() {
        let all = hermite_all(10, 0.7f64);
        for (l, h) in all.iter().enumerate() {
            assert!((h - hermite(l, 0.7)).abs() < 1e-9 * h.abs().max(1.0));
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let e = 1e-6;
        for l in 0..8 {
            let fd = (hermite(l, 0.4 + e) - hermite(l, 0.4 - e)) / (2.0 * e);
            assert!((fd - hermite_derivative(l, 0.4f64)).abs() < 1e-5 * fd.abs().max(1.0));
        }
    }
}
