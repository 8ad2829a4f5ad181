//! Empirical learnability constant: the `m`-th eigenvalue of the second
//! moment of half-vectorized Hessians at Gaussian inputs.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::subspace::{build_hessian_matrix, DerivativeMode};
use crate::teacher::TeacherNetwork;

/// `λ_m((1/N) Σ_i hvec(∇²f(x_i)) hvec(∇²f(x_i))ᵀ)` over `n_mc` Gaussian points.
pub fn estimate_alpha<T: Real>(net: &TeacherNetwork<T>, n_mc: usize, mode: DerivativeMode<T>, seed: u64) -> Result<T> {
    let m = net.neurons();
    if n_mc < m {
        return Err(Error::Precondition(format!("need N_mc >= m = {m}, got {n_mc}")));
    }
    let cols = build_hessian_matrix(net, n_mc, mode, seed)?.columns;
    let scale = T::one() / T::from_count(n_mc);
    // The nonzero spectrum is shared by H Hᵀ and Hᵀ H; use the smaller one.
    let gram: DMatrix<T> = if cols.nrows() <= cols.ncols() { &cols * cols.transpose() } else { cols.tr_mul(&cols) };
    let mut eig: Vec<T> = (gram * scale).symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(eig.get(m - 1).copied().unwrap_or_else(T::zero).max(T::zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::quadrature::GaussHermite;
    use crate::teacher::{sample_teacher, ShiftLaw};
    use nalgebra::DVector;

    #[test]
    fn single_neuron_matches_quadrature() {
        let tau = 0.3;
        let w = DMatrix::from_column_slice(4, 1, &[1.0, 0.0, 0.0, 0.0]);
        let act = Activation::<f64>::tanh();
        let net = TeacherNetwork::new(w, DVector::from_vec(vec![tau]), act.clone()).unwrap();
        let n = 4000;
        let alpha = estimate_alpha(&net, n, DerivativeMode::Exact, 3).unwrap();
        let gh = GaussHermite::<f64>::new(80);
        let mean = gh.expect(|x| act.d2(x + tau).powi(2));
        let second = gh.expect(|x| act.d2(x + tau).powi(4));
        let se = ((second - mean * mean) / n as f64).sqrt();
        assert!((alpha - mean).abs() <= 3.0 * se, "alpha {alpha} mean {mean} se {se}");
    }

    #[test]
    fn alpha_is_nonnegative_and_zero_for_rank_deficient_models() {
        // two identical neurons: only one direction in the Hessian span
        let col = [0.6, 0.8, 0.0];
        let w = DMatrix::from_column_slice(3, 2, &[col, col].concat());
        let net = TeacherNetwork::new(w, DVector::from_vec(vec![0.1, -0.2]), Activation::tanh()).unwrap();
        let alpha = estimate_alpha(&net, 50, DerivativeMode::Exact, 1).unwrap();
        assert!(alpha >= 0.0 && alpha < 1e-12);
        assert!(estimate_alpha(&net, 1, DerivativeMode::Exact, 1).is_err());
    }

    #[test]
    fn learnable_in_every_seed_at_d10_m12() {
        for seed in 0..10 {
            let net = sample_teacher(10, 12, &ShiftLaw::Uniform(-0.5, 0.5), Activation::<f64>::tanh(), seed).unwrap();
            assert!(estimate_alpha(&net, 600, DerivativeMode::Exact, seed).unwrap() > 0.0);
        }
    }

    #[test]
    fn matches_dense_second_moment() {
        let net = sample_teacher(3, 2, &ShiftLaw::Uniform(-0.5, 0.5), Activation::<f64>::tanh(), 2).unwrap();
        for n in [4, 12] {
            let h = build_hessian_matrix(&net, n, DerivativeMode::Exact, 9).unwrap().columns;
            let mut dense = DMatrix::zeros(6, 6);
            for c in h.column_iter() {
                dense += &c * c.transpose();
            }
            dense /= n as f64;
            let mut eig: Vec<f64> = dense.symmetric_eigen().eigenvalues.iter().copied().collect();
            eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let alpha = estimate_alpha(&net, n, DerivativeMode::Exact, 9).unwrap();
            assert!((alpha - eig[1]).abs() <= 1e-12);
        }
    }
}
