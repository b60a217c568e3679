use nalgebra::DMatrix;
use rand::Rng;

use crate::scalar::Real;
use crate::sde::trajectory_rng;

/// Result of [`kmeans`].
#[derive(Clone, Debug)]
pub struct KMeansResult<T: Real> {
    pub labels: Vec<usize>,
    /// Cluster centres as rows, `k × dim`.
    pub centers: DMatrix<T>,
    pub inertia: T,
}

fn dist2<T: Real>(data: &DMatrix<T>, i: usize, c: &DMatrix<T>, k: usize) -> T {
    let mut s = T::zero();
    for j in 0..data.ncols() {
        let d = data[(i, j)] - c[(k, j)];
        s += d * d;
    }
    s
}

fn plus_plus<T: Real>(data: &DMatrix<T>, k: usize, rng: &mut impl Rng) -> DMatrix<T> {
    let (n, d) = data.shape();
    let mut centers = DMatrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from(&data.row(first));
    let mut best: Vec<f64> = (0..n).map(|i| dist2(data, i, &centers, 0).to_f64_lossy()).collect();
    for c in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &b) in best.iter().enumerate() {
                if u < b {
                    pick = i;
                    break;
                }
                u -= b;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from(&data.row(pick));
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(dist2(data, i, &centers, c).to_f64_lossy());
        }
    }
    centers
}

fn lloyd<T: Real>(data: &DMatrix<T>, mut centers: DMatrix<T>, max_iter: usize) -> KMeansResult<T> {
    let (n, d) = data.shape();
    let k = centers.nrows();
    let mut labels = vec![0usize; n];
    for iter in 0..max_iter {
        let mut changed = false;
        for i in 0..n {
            let mut bl = 0;
            let mut bd = dist2(data, i, &centers, 0);
            for c in 1..k {
                let dd = dist2(data, i, &centers, c);
                if dd < bd {
                    bd = dd;
                    bl = c;
                }
            }
            if labels[i] != bl || iter == 0 {
                changed |= labels[i] != bl;
                labels[i] = bl;
            }
        }
        let mut sums = DMatrix::<T>::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            let mut r = sums.row_mut(labels[i]);
            r += data.row(i);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let row = sums.row(c) / T::usize(counts[c]);
                centers.row_mut(c).copy_from(&row);
            }
        }
        if !changed && iter > 0 {
            break;
        }
    }
    let inertia = (0..n).fold(T::zero(), |a, i| a + dist2(data, i, &centers, labels[i]));
    KMeansResult { labels, centers, inertia }
}

/// k-means with k-means++ seeding; keeps the best of `restarts` runs.
/// Labels are renumbered in order of first appearance.
pub fn kmeans<T: Real>(data: &DMatrix<T>, k: usize, restarts: usize, seed: u64) -> KMeansResult<T> {
    let n = data.nrows();
    if n == 0 || k == 0 {
        return KMeansResult { labels: vec![0; n], centers: DMatrix::zeros(0, data.ncols()), inertia: T::zero() };
    }
    let k = k.min(n);
    let mut best: Option<KMeansResult<T>> = None;
    for r in 0..restarts.max(1) {
        let mut rng = trajectory_rng(seed, r);
        let res = lloyd(data, plus_plus(data, k, &mut rng), 300);
        if best.as_ref().is_none_or(|b| res.inertia < b.inertia) {
            best = Some(res);
        }
    }
    let mut best = best.expect("at least one restart");
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for l in best.labels.iter_mut() {
        if map[*l] == usize::MAX {
            map[*l] = next;
            next += 1;
        }
        *l = map[*l];
    }
    let mut centers = DMatrix::zeros(k, data.ncols());
    for (old, &new) in map.iter().enumerate() {
        if new != usize::MAX {
            centers.row_mut(new).copy_from(&best.centers.row(old));
        }
    }
    best.centers = centers;
    best
}

/// Coherent sets from dominant eigenfunction values (`m × k`): k-means with
/// 100 restarts on the rows.
pub fn cluster_coherent_sets<T: Real>(eigenfunctions: &DMatrix<T>, n_sets: usize, seed: u64) -> Vec<usize> {
    kmeans(eigenfunctions, n_sets, 100, seed).labels
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_clusters() {
        let mut rows = Vec::new();
        for (c, centre) in [(0.0, 0.0), (5.0, 5.0), (-5.0, 5.0)].iter().enumerate() {
            for i in 0..10 {
                let off = (i as f64 * 0.37 + c as f64).sin() * 0.3;
                rows.push([centre.0 + off, centre.1 - off]);
            }
        }
        let data = DMatrix::from_fn(30, 2, |i, j| rows[i][j]);
        let labels = cluster_coherent_sets(&data, 3, 1);
        for c in 0..3 {
            let l = labels[c * 10];
            assert!(labels[c * 10..(c + 1) * 10].iter().all(|&x| x == l));
        }
        assert_eq!(labels[0], 0);
        let mut distinct = labels.clone();
        distinct.dedup();
        assert_eq!(distinct.len(), 3);
    }

    #[test]
    fn duplicates_share_labels() {
        let data = DMatrix::from_row_slice(5, 1, &[0.0, 0.0, 10.0, 10.0, 0.1]);
        let labels = cluster_coherent_sets(&data, 2, 4);
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[2], labels[3]);
        assert_ne!(labels[0], labels[2]);
    }
}
