//! Gauss–Hermite quadrature for the standard Gaussian measure.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::scalar::Real;

/// Nodes and weights integrating against the standard normal density, so
/// that `Σ wᵢ f(xᵢ) ≈ E[f(X)]`, `X ~ N(0, 1)`. Exact for polynomials of
/// degree `≤ 2n − 1`.
#[derive(Debug, Clone)]
pub struct GaussHermite<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> GaussHermite<T> {
    /// Golub–Welsch on the Jacobi matrix of the probabilists' Hermite
    /// recurrence `He_{k+1} = x He_k − k He_{k−1}`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let mut jac = DMatrix::<T>::zeros(n, n);
        for k in 0..n.saturating_sub(1) {
            let off = T::from_count(k + 1).sqrt();
            jac[(k, k + 1)] = off;
            jac[(k + 1, k)] = off;
        }
        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(T, T)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite nodes"));
        // Restore exact symmetry of the rule.
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let x = (pairs[j].0 - pairs[i].0) / T::lit(2.0);
            let w = (pairs[i].1 + pairs[j].1) / T::lit(2.0);
            pairs[i] = (-x, w);
            pairs[j] = (x, w);
        }
        if n % 2 == 1 {
            pairs[n / 2].0 = T::zero();
        }
        let total = pairs.iter().fold(T::zero(), |acc, p| acc + p.1);
        GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        }
    }

    /// `E[f(X)]` for `X ~ N(0, 1)`.
    pub fn expect<F: Fn(T) -> T>(&self, f: F) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&x, &w)| acc + w * f(x))
    }
}
