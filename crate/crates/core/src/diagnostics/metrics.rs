//! Recovered-versus-true scoring.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::diagnostics::assignment::{align_columns, Alignment};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seeds;
use crate::teacher::{StudentNetwork, TeacherNetwork};

/// Held-out Gaussian points used for `E∞` unless configured otherwise.
pub const DEFAULT_N_EVAL: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// `m⁻¹ max_i |f(x_i) − f̂(x_i)|` over held-out Gaussian points.
    pub e_inf: f64,
    /// `max_k min_s ‖w_k − s a_π(k)‖₂` with `a_j = s_j ŵ_j`.
    pub max_weight_err: f64,
    /// `m^{−1/2} ‖τ − τ̂_π‖₂`.
    pub shift_rms: f64,
    /// Fraction of neurons whose effective weight points the right way.
    pub sign_accuracy: f64,
    pub delta_w1: f64,
    pub delta_wo: f64,
    pub delta_ws: f64,
    /// Truth neuron `k` is matched to student neuron `perm[k]`.
    pub perm: Vec<usize>,
    /// Sign relating `w_k` and the matched effective weight.
    pub signs: Vec<i8>,
}

/// Weight-error functionals for aligned estimates `a_k ≈ w_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightErrors {
    pub max_err: f64,
    pub frobenius: f64,
    pub delta_w1: f64,
    pub delta_wo: f64,
    pub delta_ws: f64,
}

/// `Δ_{W,O} = Σ_{k≠k'} |⟨w_k − a_k, w_k' − a_k'⟩|`, `Δ_{W,S} = ‖Σ_k w_k − a_k‖₂`
/// and `Δ_{W,1} = m^{1/2} ln(m)^{3/4} D^{−1/4} (‖A − W‖_F + Δ_{W,O}^{1/2} D^{−1/2} + Δ_{W,S})`.
pub fn weight_errors<T: Real>(truth: &DMatrix<T>, aligned: &DMatrix<T>) -> WeightErrors {
    let (d, m) = truth.shape();
    let diff = truth - aligned;
    let e = DMatrix::from_fn(d, m, |i, j| diff[(i, j)].as_f64());
    let max_err = e.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let frobenius = e.norm();
    let g = e.tr_mul(&e);
    let mut delta_wo = 0.0;
    for k in 0..m {
        for j in 0..m {
            if k != j {
                delta_wo += g[(k, j)].abs();
            }
        }
    }
    let delta_ws = e.column_sum().norm();
    let (mf, df) = (m as f64, d as f64);
    let prefactor = mf.sqrt() * mf.ln().powf(0.75) / df.powf(0.25);
    let delta_w1 = prefactor * (frobenius + delta_wo.sqrt() / df.sqrt() + delta_ws);
    WeightErrors { max_err, frobenius, delta_w1, delta_wo, delta_ws }
}

/// Right-hand side of the initialization bound with unit constants,
/// `√m ε + m^{3/2} (ln m / D)^{3/4} δ_max`.
pub fn init_shift_bound(m: usize, d: usize, eps: f64, delta_max: f64) -> f64 {
    let mf = m as f64;
    mf.sqrt() * eps + mf.powf(1.5) * (mf.ln() / d as f64).powf(0.75) * delta_max
}

/// Columns `signs[k] · est[:, perm[k]]`.
pub fn apply_alignment<T: Real>(est: &DMatrix<T>, al: &Alignment) -> DMatrix<T> {
    let mut out = DMatrix::zeros(est.nrows(), est.ncols());
    for (k, (&j, &s)) in al.perm.iter().zip(&al.signs).enumerate() {
        out.set_column(k, &(est.column(j) * T::lit(s as f64)));
    }
    out
}

/// `m⁻¹ max_i |f(x_i) − f̂(x_i)|` on `n_eval` Gaussian points; the truth is
/// evaluated without touching its query counter.
pub fn e_inf<T: Real>(student: &StudentNetwork<T>, truth: &TeacherNetwork<T>, n_eval: usize, seed: u64) -> Result<f64> {
    const CHUNK: usize = 4096;
    let d = truth.dim();
    let chunks = n_eval.div_ceil(CHUNK);
    let worst = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<f64> {
            let mut rng = seeds::child_rng(seed, "eval-points", c as u64);
            let count = CHUNK.min(n_eval - c * CHUNK);
            let mut worst = 0.0f64;
            for _ in 0..count {
                let x: Vec<T> = seeds::gaussian_vec(&mut rng, d);
                let diff = (truth.eval_uncounted(&x)? - student.eval(&x)?).as_f64().abs();
                worst = worst.max(diff);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(worst / truth.neurons() as f64)
}

/// Aligns the student's effective weights to the truth and computes every metric.
pub fn match_and_score<T: Real>(
    student: &StudentNetwork<T>,
    truth: &TeacherNetwork<T>,
    n_eval: usize,
    seed: u64,
) -> Result<Metrics> {
    if student.dim() != truth.dim() {
        return Err(Error::DimensionMismatch { expected: truth.dim(), got: student.dim() });
    }
    if student.neurons() != truth.neurons() {
        return Err(Error::DimensionMismatch { expected: truth.neurons(), got: student.neurons() });
    }
    let m = truth.neurons();
    let eff = student.effective_weights();
    let al = align_columns(truth.weights(), &eff);
    let aligned = apply_alignment(&eff, &al);
    let errs = weight_errors(truth.weights(), &aligned);
    let shifts_pi = DVector::from_fn(m, |k, _| student.shifts()[al.perm[k]]);
    let shift_rms = (truth.shifts() - shifts_pi).norm().as_f64() / (m as f64).sqrt();
    let sign_accuracy = al.signs.iter().filter(|s| **s == 1).count() as f64 / m as f64;
    Ok(Metrics {
        e_inf: if n_eval > 0 { e_inf(student, truth, n_eval, seed)? } else { f64::NAN },
        max_weight_err: errs.max_err,
        shift_rms,
        sign_accuracy,
        delta_w1: errs.delta_w1,
        delta_wo: errs.delta_wo,
        delta_ws: errs.delta_ws,
        perm: al.perm,
        signs: al.signs,
    })
}
