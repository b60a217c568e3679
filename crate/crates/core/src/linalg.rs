//! Dense linear-algebra helpers on top of nalgebra: truncated pseudoinverses,
//! right division `Y X⁺`, and a general (non-Hermitian) eigensolver built on
//! the complex Schur form.

use nalgebra::{ComplexField, Complex, DMatrix, DVector};

use crate::scalar::Real;

/// SVD pseudoinverse discarding singular values below `rel_tol · σ_max`.
pub fn pinv_truncated<N, T>(m: &DMatrix<N>, rel_tol: T) -> DMatrix<N>
where
    N: ComplexField<RealField = T> + Copy,
    T: Real,
{
    if m.is_empty() {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd
        .singular_values
        .iter()
        .copied()
        .fold(T::zero(), |a, b| if b > a { b } else { a });
    let cutoff = smax * rel_tol;
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("V^T requested");
    let mut out = DMatrix::<N>::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff || s == T::zero() {
            continue;
        }
        let inv = N::from_real(s.recip());
        // out += v_k * inv * u_k^H
        let vk = v_t.row(k).adjoint();
        let uk = u.column(k);
        out.ger(inv, &vk, &uk.conjugate(), N::one());
    }
    out
}

/// Computes `Y X⁺` with the truncated pseudoinverse, without forming `X⁺`
/// explicitly when `X` is wide.
pub fn right_divide<N, T>(y: &DMatrix<N>, x: &DMatrix<N>, rel_tol: T) -> DMatrix<N>
where
    N: ComplexField<RealField = T> + Copy,
    T: Real,
{
    assert_eq!(y.ncols(), x.ncols(), "Y and X must share the snapshot count");
    if x.nrows() <= x.ncols() {
        // X = U Σ Vᴴ with X wide; decompose Xᴴ (tall) to keep factors thin.
        let svd = x.adjoint().svd(true, true);
        // Xᴴ = U' Σ V'ᴴ  =>  X = V' Σ U'ᴴ,  X⁺ = U' Σ⁻¹ V'ᴴ
        let u = svd.u.as_ref().expect("U requested"); // m × r
        let v_t = svd.v_t.as_ref().expect("V^T requested"); // r × n
        let smax = svd
            .singular_values
            .iter()
            .copied()
            .fold(T::zero(), |a, b| if b > a { b } else { a });
        let cutoff = smax * rel_tol;
        let yu = y * u; // n' × r
        let mut scaled = yu;
        for (k, &s) in svd.singular_values.iter().enumerate() {
            let f = if s <= cutoff || s == T::zero() { T::zero() } else { s.recip() };
            scaled.column_mut(k).scale_mut(f);
        }
        scaled * v_t
    } else {
        y * pinv_truncated(x, rel_tol)
    }
}

/// Eigenvalues and right eigenvectors (unit 2-norm columns).
#[derive(Clone, Debug)]
pub struct EigenDecomposition<T: Real> {
    pub values: Vec<Complex<T>>,
    pub vectors: DMatrix<Complex<T>>,
}

impl<T: Real> EigenDecomposition<T> {
    /// Reorders eigenpairs by a key, descending.
    pub fn sort_by_key_desc(&mut self, key: impl Fn(&Complex<T>) -> T) {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| {
            key(&self.values[b])
                .partial_cmp(&key(&self.values[a]))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        self.values = idx.iter().map(|&i| self.values[i]).collect();
        self.vectors = DMatrix::from_columns(
            &idx.iter().map(|&i| self.vectors.column(i).into_owned()).collect::<Vec<_>>(),
        );
    }

    pub fn truncate(&mut self, k: usize) {
        let k = k.min(self.values.len());
        self.values.truncate(k);
        self.vectors = self.vectors.columns(0, k).into_owned();
    }
}

pub fn to_complex<T: Real>(m: &DMatrix<T>) -> DMatrix<Complex<T>> {
    m.map(|x| Complex::new(x, T::zero()))
}

/// General eigendecomposition of a real square matrix.
pub fn eig_real<T: Real>(a: &DMatrix<T>) -> EigenDecomposition<T> {
    eig_complex(&to_complex(a))
}

/// General eigendecomposition of a complex square matrix via the Schur form
/// `A = Q T Qᴴ`; eigenvectors come from back substitution on `T`.
pub fn eig_complex<T: Real>(a: &DMatrix<Complex<T>>) -> EigenDecomposition<T> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "square matrix required");
    if n == 0 {
        return EigenDecomposition { values: vec![], vectors: DMatrix::zeros(0, 0) };
    }
    let scale = a.iter().map(|z| z.norm_sqr().sqrt()).fold(T::zero(), |m, v| m.max(v));
    let (q, t) = schur_with_retries(a, scale);
    let tiny = T::default_epsilon() * scale.max(T::min_value().unwrap_or(T::default_epsilon()));
    let tiny = if tiny > T::zero() { tiny } else { T::default_epsilon() };
    let values: Vec<Complex<T>> = (0..n).map(|i| t[(i, i)]).collect();
    let mut vectors = DMatrix::<Complex<T>>::zeros(n, n);
    for k in 0..n {
        let lambda = values[k];
        let mut y = DVector::<Complex<T>>::zeros(n);
        y[k] = Complex::new(T::one(), T::zero());
        for i in (0..k).rev() {
            let mut s = Complex::new(T::zero(), T::zero());
            for j in (i + 1)..=k {
                s += t[(i, j)] * y[j];
            }
            let mut denom = t[(i, i)] - lambda;
            if denom.norm_sqr().sqrt() < tiny {
                denom = Complex::new(tiny, T::zero());
            }
            y[i] = -s / denom;
        }
        let mut v = &q * y;
        let nrm = v.norm();
        if nrm > T::zero() {
            v.unscale_mut(nrm);
        }
        vectors.set_column(k, &v);
    }
    EigenDecomposition { values, vectors }
}

/// Complex Schur form with an iteration cap. The shifted QR iteration can
/// stall on matrices with clustered eigenvalues; each retry adds a fixed
/// pseudo-random perturbation of relative size `10^{-14}`, `10^{-13}`, ….
fn schur_with_retries<T: Real>(a: &DMatrix<Complex<T>>, scale: T) -> (DMatrix<Complex<T>>, DMatrix<Complex<T>>) {
    let n = a.nrows();
    let max_iter = 200 * n.max(10);
    let mut m = a.clone();
    for attempt in 0..8 {
        if let Some(s) = nalgebra::linalg::Schur::try_new(m.clone(), T::default_epsilon(), max_iter) {
            return s.unpack();
        }
        let delta = scale.max(T::one()) * T::lit(10f64.powi(attempt - 14));
        m = a + DMatrix::from_fn(n, n, |i, j| {
            let h = ((i * 7919 + j * 104_729 + 13) % 1000) as f64 / 1000.0 - 0.5;
            Complex::new(delta * T::lit(h), T::zero())
        });
    }
    nalgebra::linalg::Schur::new(m).unpack()
}

/// Symmetric square root `S^{1/2}` and functions of symmetric PSD matrices.
pub fn symmetric_function<T: Real>(s: &DMatrix<T>, f: impl Fn(T) -> T) -> DMatrix<T> {
    let eig = nalgebra::SymmetricEigen::new(s.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Numerical rank with relative tolerance.
pub fn rank<T: Real>(m: &DMatrix<T>, rel_tol: T) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(T::zero(), |a, b| a.max(b));
    sv.iter().filter(|&&s| s > smax * rel_tol && s > T::zero()).count()
}

/// 2-norm condition number of a symmetric matrix.
pub fn condition_number<T: Real>(m: &DMatrix<T>) -> T {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let smin = sv.iter().copied().fold(smax, |a, b| a.min(b));
    if smin == T::zero() {
        T::max_value().unwrap_or(smax)
    } else {
        smax / smin
    }
}
