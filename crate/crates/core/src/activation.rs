//! Activation functions with exact derivatives up to third order.
//!
//! An [`Activation`] bundles `g, g′, g″, g‴`, the admissible shift radius
//! `tau_inf` on which `g″` is strictly monotone and `g′` keeps its sign, the
//! derivative bound `kappa`, and the inverse of `g″` on that interval.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::GaussHermite;
use crate::scalar::Real;

pub type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Grid size for the monotonicity and sign checks on `[-tau_inf, tau_inf]`.
const MONOTONE_GRID: usize = 1000;
/// Grid for the `kappa` maximization over `[-20, 20]`.
const KAPPA_GRID: usize = 100_000;
const KAPPA_RANGE: f64 = 20.0;

pub const TANH_TAU_INF: f64 = 0.6;
/// `sigmoid″` stops being monotone at `|t| = ln((3+√3)/(3−√3)) ≈ 1.317`.
pub const SIGMOID_TAU_INF: f64 = 1.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Tanh,
    Sigmoid,
    Custom,
}

impl ActivationKind {
    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(ActivationKind::Tanh),
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            other => Err(Error::Validation(format!(
                "unknown activation `{other}` (expected tanh | sigmoid)"
            ))),
        }
    }
}

/// User-supplied activation: `g` and its first three derivatives plus the
/// declared shift radius.
#[derive(Clone)]
pub struct CustomActivation<T> {
    pub name: String,
    pub g: ScalarFn<T>,
    pub d1: ScalarFn<T>,
    pub d2: ScalarFn<T>,
    pub d3: ScalarFn<T>,
    pub tau_inf: T,
}

pub enum ActivationSpec<T> {
    Tanh,
    Sigmoid,
    Custom(CustomActivation<T>),
}

#[derive(Clone)]
enum Profile<T> {
    Tanh,
    Sigmoid,
    Custom(CustomActivation<T>),
}

#[derive(Clone)]
pub struct Activation<T> {
    profile: Profile<T>,
    tau_inf: T,
    kappa: T,
    g2_monotone_sign: i8,
}

impl<T: Real> fmt::Debug for Activation<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Activation")
            .field("kind", &self.kind())
            .field("tau_inf", &self.tau_inf)
            .field("kappa", &self.kappa)
            .field("g2_monotone_sign", &self.g2_monotone_sign)
            .finish()
    }
}

/// Sign of `∫ g′(t + τ) e^{−t²/2} dt` over a grid of shifts.
#[derive(Debug, Clone, PartialEq)]
pub struct SignCertificate {
    /// `Some(±1)` when the integral has the same sign at every grid shift.
    pub sign: Option<i8>,
    /// Smallest absolute value of the normalized integral over the grid.
    pub min_abs: f64,
}

/// Builds one of the supported activations.
pub fn make_activation<T: Real>(spec: ActivationSpec<T>) -> Result<Activation<T>> {
    match spec {
        ActivationSpec::Tanh => Activation::build(Profile::Tanh, T::lit(TANH_TAU_INF)),
        ActivationSpec::Sigmoid => Activation::build(Profile::Sigmoid, T::lit(SIGMOID_TAU_INF)),
        ActivationSpec::Custom(c) => {
            let tau = c.tau_inf;
            Activation::build(Profile::Custom(c), tau)
        }
    }
}

impl<T: Real> Activation<T> {
    pub fn tanh() -> Self {
        make_activation(ActivationSpec::Tanh).expect("tanh satisfies the activation checks")
    }

    pub fn sigmoid() -> Self {
        make_activation(ActivationSpec::Sigmoid).expect("sigmoid satisfies the activation checks")
    }

    pub fn from_kind(kind: ActivationKind) -> Result<Self> {
        match kind {
            ActivationKind::Tanh => Ok(Self::tanh()),
            ActivationKind::Sigmoid => Ok(Self::sigmoid()),
            ActivationKind::Custom => Err(Error::Validation(
                "custom activations need an explicit function bundle".into(),
            )),
        }
    }

    /// Same activation with a different shift radius, re-validated.
    pub fn with_tau_inf(&self, tau_inf: T) -> Result<Self> {
        Self::build(self.profile.clone(), tau_inf)
    }

    fn build(profile: Profile<T>, tau_inf: T) -> Result<Self> {
        if !(tau_inf > T::zero()) || !tau_inf.is_finite() {
            return Err(Error::Validation(format!("tau_inf must be positive, got {tau_inf}")));
        }
        let mut act = Activation { profile, tau_inf, kappa: T::zero(), g2_monotone_sign: 1 };
        act.g2_monotone_sign = act.check_monotone()?;
        act.check_first_derivative_sign()?;
        act.kappa = act.compute_kappa();
        Ok(act)
    }

    pub fn kind(&self) -> ActivationKind {
        match self.profile {
            Profile::Tanh => ActivationKind::Tanh,
            Profile::Sigmoid => ActivationKind::Sigmoid,
            Profile::Custom(_) => ActivationKind::Custom,
        }
    }

    pub fn name(&self) -> &str {
        match &self.profile {
            Profile::Custom(c) => &c.name,
            _ => self.kind().name(),
        }
    }

    pub fn tau_inf(&self) -> T {
        self.tau_inf
    }

    /// `max_{n∈{1,2,3}} ‖g⁽ⁿ⁾‖∞`.
    pub fn kappa(&self) -> T {
        self.kappa
    }

    /// `+1` if `g″` increases on the admissible interval, `−1` otherwise.
    pub fn g2_monotone_sign(&self) -> i8 {
        self.g2_monotone_sign
    }

    #[inline]
    pub fn g(&self, t: T) -> T {
        match &self.profile {
            Profile::Tanh => t.tanh(),
            Profile::Sigmoid => sigmoid(t),
            Profile::Custom(c) => (c.g)(t),
        }
    }

    #[inline]
    pub fn d1(&self, t: T) -> T {
        match &self.profile {
            Profile::Tanh => {
                let th = t.tanh();
                T::one() - th * th
            }
            Profile::Sigmoid => {
                let s = sigmoid(t);
                s * (T::one() - s)
            }
            Profile::Custom(c) => (c.d1)(t),
        }
    }

    /// `(g(t), g′(t))` sharing one transcendental evaluation where possible.
    #[inline]
    pub fn g_d1(&self, t: T) -> (T, T) {
        match &self.profile {
            Profile::Tanh => {
                let th = t.tanh();
                (th, T::one() - th * th)
            }
            Profile::Sigmoid => {
                let s = sigmoid(t);
                (s, s * (T::one() - s))
            }
            Profile::Custom(c) => ((c.g)(t), (c.d1)(t)),
        }
    }

    #[inline]
    pub fn d2(&self, t: T) -> T {
        match &self.profile {
            Profile::Tanh => {
                let th = t.tanh();
                T::lit(-2.0) * th * (T::one() - th * th)
            }
            Profile::Sigmoid => {
                let s = sigmoid(t);
                s * (T::one() - s) * (T::one() - T::lit(2.0) * s)
            }
            Profile::Custom(c) => (c.d2)(t),
        }
    }

    #[inline]
    pub fn d3(&self, t: T) -> T {
        match &self.profile {
            Profile::Tanh => {
                let th = t.tanh();
                let th2 = th * th;
                T::lit(-2.0) * (T::one() - th2) * (T::one() - T::lit(3.0) * th2)
            }
            Profile::Sigmoid => {
                let s = sigmoid(t);
                s * (T::one() - s) * (T::one() - T::lit(6.0) * s + T::lit(6.0) * s * s)
            }
            Profile::Custom(c) => (c.d3)(t),
        }
    }

    /// `g⁽ⁿ⁾(t)` for `n ∈ 0..=3`.
    pub fn derivative(&self, n: u32, t: T) -> T {
        match n {
            0 => self.g(t),
            1 => self.d1(t),
            2 => self.d2(t),
            3 => self.d3(t),
            _ => panic!("derivatives above third order are not available"),
        }
    }

    /// `argmin_{t ∈ [−τ∞, τ∞]} |g″(t) − y|`.
    ///
    /// Inside the image of `g″` this is the bisection root on the monotone
    /// branch, refined until the bracket cannot shrink further; outside it
    /// the nearer endpoint is returned.
    pub fn invert_g2(&self, y: T) -> Result<T> {
        if !y.is_finite() {
            return Err(Error::Domain(format!("cannot invert g'' at non-finite value {y}")));
        }
        let (lo, hi) = (-self.tau_inf, self.tau_inf);
        let (v_lo, v_hi) = (self.d2(lo), self.d2(hi));
        let s = T::lit(self.g2_monotone_sign as f64);
        // f is increasing on [lo, hi]
        let f = |t: T| s * (self.d2(t) - y);
        let (f_lo, f_hi) = (s * (v_lo - y), s * (v_hi - y));
        if f_lo >= T::zero() || f_hi <= T::zero() {
            return Ok(if (v_lo - y).abs() <= (v_hi - y).abs() { lo } else { hi });
        }
        let (mut a, mut b) = (lo, hi);
        for _ in 0..400 {
            let mid = (a + b) / T::lit(2.0);
            if mid <= a || mid >= b {
                break;
            }
            let fm = f(mid);
            if fm == T::zero() {
                return Ok(mid);
            }
            if fm < T::zero() {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(if f(a).abs() <= f(b).abs() { a } else { b })
    }

    /// Numerical check of the sign constant `s` in the activation assumptions:
    /// Gauss–Hermite evaluation of `E[g′(X + τ)]` on `tau_grid` shifts.
    pub fn sign_certificate(&self, tau_grid: usize, nodes: usize) -> SignCertificate {
        let rule = GaussHermite::<T>::new(nodes.max(2));
        let mut signs = Vec::with_capacity(tau_grid);
        let mut min_abs = f64::INFINITY;
        for tau in grid(-self.tau_inf, self.tau_inf, tau_grid.max(2)) {
            let v = rule.expect(|t| self.d1(t + tau)).as_f64();
            min_abs = min_abs.min(v.abs());
            signs.push(if v > 0.0 { 1i8 } else if v < 0.0 { -1 } else { 0 });
        }
        let first = signs[0];
        let sign = (first != 0 && signs.iter().all(|&s| s == first)).then_some(first);
        SignCertificate { sign, min_abs }
    }

    fn check_monotone(&self) -> Result<i8> {
        let pts: Vec<T> = grid(-self.tau_inf, self.tau_inf, MONOTONE_GRID).collect();
        let mut sign = 0i8;
        for w in pts.windows(2) {
            let diff = self.d2(w[1]) - self.d2(w[0]);
            let here = if diff > T::zero() {
                1
            } else if diff < T::zero() {
                -1
            } else {
                0
            };
            if here == 0 || (sign != 0 && here != sign) {
                return Err(Error::InvalidActivation {
                    detail: "g'' is not strictly monotone on [-tau_inf, tau_inf]".into(),
                    location: w[0].as_f64(),
                });
            }
            sign = here;
        }
        Ok(sign)
    }

    fn check_first_derivative_sign(&self) -> Result<()> {
        let mut sign = 0i8;
        for t in grid(-self.tau_inf, self.tau_inf, MONOTONE_GRID) {
            let v = self.d1(t);
            let here = if v > T::zero() {
                1
            } else if v < T::zero() {
                -1
            } else {
                0
            };
            if here == 0 || (sign != 0 && here != sign) {
                return Err(Error::InvalidActivation {
                    detail: "g' changes sign on [-tau_inf, tau_inf]".into(),
                    location: t.as_f64(),
                });
            }
            sign = here;
        }
        Ok(())
    }

    /// Grid maximization over `[−20, 20]`, then a local ternary refinement
    /// around each grid maximizer so the bound is not undercut between nodes.
    fn compute_kappa(&self) -> T {
        let lo = T::lit(-KAPPA_RANGE);
        let step = T::lit(2.0 * KAPPA_RANGE / (KAPPA_GRID - 1) as f64);
        let mut kappa = T::zero();
        for n in 1..=3 {
            let h = |t: T| self.derivative(n, t).abs();
            let mut best = (T::zero(), lo);
            for i in 0..KAPPA_GRID {
                let t = lo + step * T::from_count(i);
                let v = h(t);
                if v > best.0 {
                    best = (v, t);
                }
            }
            let (mut a, mut b) = (best.1 - step, best.1 + step);
            for _ in 0..100 {
                let m1 = a + (b - a) / T::lit(3.0);
                let m2 = b - (b - a) / T::lit(3.0);
                if h(m1) < h(m2) {
                    a = m1;
                } else {
                    b = m2;
                }
            }
            let refined = h((a + b) / T::lit(2.0));
            kappa = kappa.max(best.0.max(refined));
        }
        kappa
    }
}

#[inline]
fn sigmoid<T: Real>(t: T) -> T {
    if t >= T::zero() {
        T::one() / (T::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (T::one() + e)
    }
}

/// `n` equispaced points covering `[a, b]` inclusive.
pub(crate) fn grid<T: Real>(a: T, b: T, n: usize) -> impl Iterator<Item = T> {
    let denom = T::from_count(n.max(2) - 1);
    (0..n).map(move |i| a + (b - a) * T::from_count(i) / denom)
}
