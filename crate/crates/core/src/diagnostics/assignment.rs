//! Optimal matching of recovered columns to ground-truth columns up to sign.

use nalgebra::DMatrix;

use crate::scalar::Real;

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian
/// algorithm with potentials, `O(n³)`). Returns the column assigned to each row.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Truth column `k` is matched to estimate column `perm[k]` with sign `signs[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub perm: Vec<usize>,
    pub signs: Vec<i8>,
}

/// Matching that maximizes `Σ_k |⟨w_k, ŵ_π(k)⟩|`, with the sign of each
/// matched inner product.
pub fn align_columns<T: Real>(truth: &DMatrix<T>, est: &DMatrix<T>) -> Alignment {
    let m = truth.ncols();
    assert_eq!(m, est.ncols(), "column counts differ");
    let inner = truth.tr_mul(est);
    let cost = DMatrix::from_fn(m, m, |k, j| -inner[(k, j)].as_f64().abs());
    let perm = hungarian(&cost);
    let signs = perm.iter().enumerate().map(|(k, &j)| if inner[(k, j)] < T::zero() { -1 } else { 1 }).collect();
    Alignment { perm, signs }
}
