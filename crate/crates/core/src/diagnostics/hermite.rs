//! Expansions in the orthonormal Hermite basis under the standard Gaussian
//! measure, and the kernel floor `ω` built from their tails.

use rand_distr::{Distribution, StandardNormal};

use crate::activation::Activation;
use crate::quadrature::GaussHermite;
use crate::scalar::Real;
use crate::seeds;

/// Highest coefficient included in `ω`; the remainder is bounded separately.
pub const OMEGA_R_MAX: usize = 20;
/// Quadrature nodes used by [`kernel_floor_omega`].
pub const OMEGA_NODES: usize = 120;

/// `h_0(x), …, h_{r_max}(x)` with `h_{r+1} = (x h_r − √r h_{r−1}) / √(r+1)`.
pub fn hermite_values<T: Real>(x: T, r_max: usize) -> Vec<T> {
    let mut h = Vec::with_capacity(r_max + 1);
    h.push(T::one());
    if r_max >= 1 {
        h.push(x);
    }
    for r in 1..r_max {
        let next = (x * h[r] - T::from_count(r).sqrt() * h[r - 1]) / T::from_count(r + 1).sqrt();
        h.push(next);
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermiteExpansion<T> {
    /// `μ_0, …, μ_{r_max}`.
    pub coeffs: Vec<T>,
    /// Set when `r_max` exceeds half the node count, where the quadrature no
    /// longer integrates `f h_r` reliably.
    pub accuracy_warning: bool,
}

impl<T: Real> HermiteExpansion<T> {
    /// `Σ_{r ≥ from} μ_r²` over the computed range.
    pub fn tail_energy(&self, from: usize) -> T {
        self.coeffs.iter().skip(from).fold(T::zero(), |a, c| a + *c * *c)
    }
}

/// `μ_r = E[f(X) h_r(X)]`, `X ~ N(0, 1)`, by Gauss–Hermite quadrature.
pub fn hermite_coeffs<T: Real, F: Fn(T) -> T>(f: F, r_max: usize, quad_nodes: usize) -> HermiteExpansion<T> {
    let gh = GaussHermite::<T>::new(quad_nodes);
    let mut coeffs = vec![T::zero(); r_max + 1];
    for (x, w) in gh.nodes.iter().zip(&gh.weights) {
        let fx = f(*x) * *w;
        for (c, h) in coeffs.iter_mut().zip(hermite_values(*x, r_max)) {
            *c += fx * h;
        }
    }
    HermiteExpansion { coeffs, accuracy_warning: 2 * r_max > quad_nodes }
}

/// Monte-Carlo estimate of `Σ_{r ≥ r_min} μ_r(f)²` as
/// `E[f²] − Σ_{r < r_min} μ_r²`, using antithetic pairs `±X`.
pub fn hermite_tail_mc<F: Fn(f64) -> f64>(f: F, r_min: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = seeds::child_rng(seed, "hermite-mc", 0);
    let pairs = (samples / 2).max(1);
    let mut energy = 0.0;
    let mut low = vec![0.0; r_min];
    for _ in 0..pairs {
        let x: f64 = StandardNormal.sample(&mut rng);
        for z in [x, -x] {
            let fz = f(z);
            energy += fz * fz;
            for (c, h) in low.iter_mut().zip(hermite_values(z, r_min.saturating_sub(1))) {
                *c += fz * h;
            }
        }
    }
    let n = (2 * pairs) as f64;
    energy / n - low.iter().map(|c| (c / n) * (c / n)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaReport {
    /// `½ min_τ Σ_{r=4}^{20} μ_r(g′(· + τ))²`.
    pub omega: f64,
    pub tau_min: f64,
    /// Upper bound on the neglected `Σ_{r>20} μ_r²`, maximized over the grid.
    pub tail_bound: f64,
}

/// Kernel floor `ω` over `tau_grid` equispaced shifts in `[−τ∞, τ∞]`.
///
/// The tail uses `μ_r(g′) = μ_{r−2}(g‴) / √(r(r−1))`, so
/// `Σ_{r>20} μ_r(g′)² ≤ E[g‴(X+τ)²] / (21·20)`.
pub fn kernel_floor_omega<T: Real>(act: &Activation<T>, tau_grid: usize) -> OmegaReport {
    let tau_inf = act.tau_inf().as_f64();
    let gh = GaussHermite::<f64>::new(OMEGA_NODES);
    let mut best = (f64::INFINITY, 0.0);
    let mut tail_bound: f64 = 0.0;
    for tau in crate::activation::grid(-tau_inf, tau_inf, tau_grid.max(1)) {
        let tau = if tau_grid <= 1 { 0.0 } else { tau };
        let exp = hermite_coeffs(|y: f64| act.d1(T::lit(y + tau)).as_f64(), OMEGA_R_MAX, OMEGA_NODES);
        let s = exp.tail_energy(4);
        if s < best.0 {
            best = (s, tau);
        }
        let g3_energy = gh.expect(|y| act.d3(T::lit(y + tau)).as_f64().powi(2));
        let r = (OMEGA_R_MAX + 1) as f64;
        tail_bound = tail_bound.max(g3_energy / (r * (r - 1.0)));
    }
    OmegaReport { omega: 0.5 * best.0, tau_min: best.1, tail_bound }
}
