//! Signs and initial shifts from second- and third-order directional
//! derivatives of the teacher at the origin.
//!
//! Along a recovered direction `ŵ_k`, `T_{n,k} = Σ_ℓ C_{n,ℓ} ⟨ŵ_k, ŵ_ℓ⟩ⁿ` with
//! `C_{n,ℓ} = s_ℓⁿ g⁽ⁿ⁾(τ_ℓ)`, so solving the Hadamard-power Grammian systems
//! for `n = 2, 3` gives `g″(τ_ℓ)` and `s_ℓ g‴(τ_ℓ)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::numdiff::fd_directional;
use crate::scalar::Real;
use crate::subspace::DerivativeMode;
use crate::teacher::TeacherNetwork;

/// Systems with a larger condition number are rejected.
pub const MAX_CONDITION: f64 = 1e10;
/// Below this `|g‴(0)|` the sign rule uses `g‴(τ̂_k)` instead.
pub const G3_ZERO_TOL: f64 = 1e-8;
const REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct InitResult<T: Real> {
    pub signs: Vec<i8>,
    pub tau0: DVector<T>,
    pub c2: DVector<T>,
    pub c3: DVector<T>,
    pub cond_g2: f64,
    pub cond_g3: f64,
    /// Neurons whose `C̃₃` was exactly zero; their sign was set to `+1`.
    pub undetermined: Vec<usize>,
    /// Whether the sign rule used `g‴(τ̂_k)` because `g‴(0)` vanishes.
    pub sign_fallback: bool,
    /// Neurons whose `C̃₂` fell outside the image of `g″` and were clamped.
    pub clamped: Vec<usize>,
    /// Network queries issued.
    pub queries: u64,
}

/// Entrywise `n`-th power of `ŴᵀŴ`.
pub fn grammian<T: Real>(wh: &DMatrix<T>, n: u32) -> DMatrix<T> {
    wh.tr_mul(wh).map(|v| v.powi(n as i32))
}

/// `T̃_{n,k}`: `n`-th derivative of `t ↦ f(t ŵ_k)` at 0.
pub fn directional_derivs_at_zero<T: Real>(
    net: &TeacherNetwork<T>,
    wh: &DMatrix<T>,
    n: u32,
    mode: DerivativeMode<T>,
) -> Result<DVector<T>> {
    if wh.nrows() != net.dim() {
        return Err(Error::DimensionMismatch { expected: net.dim(), got: wh.nrows() });
    }
    let zero = vec![T::zero(); net.dim()];
    let vals: Vec<T> = (0..wh.ncols())
        .into_par_iter()
        .map(|k| {
            let u = wh.column(k);
            match mode {
                DerivativeMode::Exact => net.analytic_directional(&zero, u.as_slice(), n),
                DerivativeMode::FiniteDiff(cfg) => fd_directional(net, &zero, u.as_slice(), n, &cfg),
            }
        })
        .collect::<Result<_>>()?;
    Ok(DVector::from_vec(vals))
}

/// Solves `G x = b` for symmetric positive definite `G` by Cholesky with
/// iterative refinement. Returns the solution and `cond₂(G)`.
pub fn solve_spd<T: Real>(g: &DMatrix<T>, b: &DVector<T>, order: u32) -> Result<(DVector<T>, f64)> {
    let eig = g.clone().symmetric_eigen();
    let lo = eig.eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(v.as_f64()));
    let hi = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.as_f64()));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularSystem { order, cond });
    }
    let chol = g.clone().cholesky().ok_or(Error::SingularSystem { order, cond })?;
    let mut x = chol.solve(b);
    for _ in 0..REFINEMENT_STEPS {
        let r = b - g * &x;
        x += chol.solve(&r);
    }
    Ok((x, cond))
}

/// Outcome of the sign rule for one neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignDecision {
    pub sign: i8,
    pub undetermined: bool,
    pub fallback: bool,
}

/// `s = sign(C̃₃ · g‴(0))`, or `sign(C̃₃ · g‴(τ̂))` when `|g‴(0)| < 10⁻⁸`.
pub fn sign_rule<T: Real>(c3: T, tau_hat: T, act: &Activation<T>) -> SignDecision {
    let g3_zero = act.d3(T::zero());
    let fallback = g3_zero.abs() < T::lit(G3_ZERO_TOL);
    let reference = if fallback { act.d3(tau_hat) } else { g3_zero };
    let prod = c3 * reference;
    if prod > T::zero() {
        SignDecision { sign: 1, undetermined: false, fallback }
    } else if prod < T::zero() {
        SignDecision { sign: -1, undetermined: false, fallback }
    } else {
        SignDecision { sign: 1, undetermined: true, fallback }
    }
}

/// Recovers signs and initial shifts for the unit columns of `wh`.
pub fn init_signs_shifts<T: Real>(
    net: &TeacherNetwork<T>,
    wh: &DMatrix<T>,
    act: &Activation<T>,
    mode: DerivativeMode<T>,
) -> Result<InitResult<T>> {
    for (k, c) in wh.column_iter().enumerate() {
        if !((c.norm() - T::one()).abs() <= T::tol(1e-8)) {
            return Err(Error::Precondition(format!("column {k} of the recovered weights is not unit norm")));
        }
    }
    let before = net.query_count();
    let t2 = directional_derivs_at_zero(net, wh, 2, mode)?;
    let t3 = directional_derivs_at_zero(net, wh, 3, mode)?;
    let queries = net.query_count() - before;
    let (c2, cond_g2) = solve_spd(&grammian(wh, 2), &t2, 2)?;
    let (c3, cond_g3) = solve_spd(&grammian(wh, 3), &t3, 3)?;
    let m = wh.ncols();
    let tau_inf = act.tau_inf();
    let (lo_img, hi_img) = {
        let (a, b) = (act.d2(-tau_inf), act.d2(tau_inf));
        if a < b { (a, b) } else { (b, a) }
    };
    let mut tau0 = DVector::zeros(m);
    let mut signs = Vec::with_capacity(m);
    let mut undetermined = Vec::new();
    let mut clamped = Vec::new();
    let mut sign_fallback = false;
    for k in 0..m {
        if c2[k] < lo_img || c2[k] > hi_img {
            clamped.push(k);
        }
        tau0[k] = act.invert_g2(c2[k])?;
        let dec = sign_rule(c3[k], tau0[k], act);
        signs.push(dec.sign);
        sign_fallback |= dec.fallback;
        if dec.undetermined {
            undetermined.push(k);
        }
    }
    Ok(InitResult { signs, tau0, c2, c3, cond_g2, cond_g3, undetermined, sign_fallback, clamped, queries })
}
