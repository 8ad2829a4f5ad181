//! Incoherence of a weight matrix: pairwise correlations, Hadamard-power
//! Grammians and a sampled restricted-isometry certificate.

use nalgebra::DMatrix;
use rand::seq::index::sample;

use crate::scalar::Real;
use crate::seeds;
use crate::shift_init::grammian;

/// Orders `n` of the Grammians `G_n` that are reported.
pub const GRAM_ORDERS: [u32; 3] = [2, 3, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct IncoherenceReport {
    /// `max_{i≠j} ⟨w_i, w_j⟩²`.
    pub max_sq_corr: f64,
    /// `max_sq_corr · D / ln m` (0 when `m = 1`).
    pub c2_hat: f64,
    /// `‖G_n⁻¹‖₂` for `n = 2, 3, 4` (infinite when `G_n` is singular).
    pub gram_inv_norms: [f64; 3],
    /// `‖G_n‖₂` for `n = 2, 3, 4`.
    pub gram_norms: [f64; 3],
    /// Gershgorin bound `1 + (m−1) max_{i≠j} |⟨w_i, w_j⟩|ⁿ` for `n = 2, 3, 4`.
    pub gershgorin_bounds: [f64; 3],
    /// Subset size of the RIP probe, `⌈D / (4 ln m)⌉` clamped to `[1, m]`.
    pub rip_p: usize,
    /// `(p, ‖W_pᵀ W_p − I‖₂)` for each sampled subset.
    pub rip_samples: Vec<(usize, f64)>,
    /// Worst sampled RIP constant.
    pub rip_delta_hat: f64,
    /// Requested RIP level `δ`.
    pub delta: f64,
}

impl IncoherenceReport {
    /// Whether every sampled subset met the requested level. A sampled
    /// certificate, not a proof.
    pub fn rip_holds(&self) -> bool {
        self.rip_delta_hat <= self.delta
    }
}

/// Extreme eigenvalues `(λ_min, λ_max)` of a symmetric matrix.
pub(crate) fn eig_range<T: Real>(a: &DMatrix<T>) -> (f64, f64) {
    let eig = a.clone().symmetric_eigen();
    let lo = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.as_f64()));
    let hi = eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
    (lo, hi)
}

/// `max_{i≠j} |⟨w_i, w_j⟩|`.
pub fn max_abs_corr<T: Real>(w: &DMatrix<T>) -> f64 {
    let g = w.tr_mul(w);
    let m = g.nrows();
    let mut best: f64 = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            best = best.max(g[(i, j)].as_f64().abs());
        }
    }
    best
}

pub fn rip_subset_size(d: usize, m: usize) -> usize {
    if m <= 1 {
        return 1;
    }
    ((d as f64 / (4.0 * (m as f64).ln())).ceil() as usize).clamp(1, m)
}

pub fn check_incoherence<T: Real>(w: &DMatrix<T>, delta: f64, rip_trials: usize, seed: u64) -> IncoherenceReport {
    let (d, m) = w.shape();
    let corr = max_abs_corr(w);
    let max_sq_corr = corr * corr;
    let c2_hat = if m > 1 { max_sq_corr * d as f64 / (m as f64).ln() } else { 0.0 };
    let mut gram_inv_norms = [0.0; 3];
    let mut gram_norms = [0.0; 3];
    let mut gershgorin_bounds = [0.0; 3];
    for (idx, n) in GRAM_ORDERS.iter().enumerate() {
        let (lo, hi) = eig_range(&grammian(w, *n));
        gram_inv_norms[idx] = if lo > 0.0 { 1.0 / lo } else { f64::INFINITY };
        gram_norms[idx] = hi;
        gershgorin_bounds[idx] = 1.0 + (m as f64 - 1.0) * corr.powi(*n as i32);
    }
    let p = rip_subset_size(d, m);
    let mut rng = seeds::child_rng(seed, "rip", 0);
    let mut rip_samples = Vec::with_capacity(rip_trials);
    for _ in 0..rip_trials {
        let idx = sample(&mut rng, m, p).into_vec();
        let sub = w.select_columns(idx.iter());
        let mut g = sub.tr_mul(&sub);
        for i in 0..p {
            g[(i, i)] -= T::one();
        }
        let (lo, hi) = eig_range(&g);
        rip_samples.push((p, lo.abs().max(hi.abs())));
    }
    let rip_delta_hat = rip_samples.iter().fold(0.0f64, |a, s| a.max(s.1));
    IncoherenceReport {
        max_sq_corr,
        c2_hat,
        gram_inv_norms,
        gram_norms,
        gershgorin_bounds,
        rip_p: p,
        rip_samples,
        rip_delta_hat,
        delta,
    }
}
