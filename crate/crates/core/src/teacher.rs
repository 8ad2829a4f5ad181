//! Planted shallow networks `f(x) = Σ_k g(⟨w_k, x⟩ + τ_k)` and their students.
//!
//! [`TeacherNetwork`] is the black box: every scalar evaluation through
//! [`TeacherNetwork::eval`] is counted. The analytic derivative oracles are
//! counted separately so a run can prove it never touched them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::activation::{Activation, ActivationKind};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seeds;

/// Distribution of the planted shifts.
#[derive(Debug, Clone, PartialEq)]
pub enum ShiftLaw<T> {
    Uniform(T, T),
    /// Centered Gaussian with the given standard deviation, clamped to `±tau_inf`.
    Gaussian(T),
    Fixed(Vec<T>),
}

impl<T: Real> FromStr for ShiftLaw<T> {
    type Err = Error;

    /// `uniform(a,b)`, `gaussian(sigma)` or `fixed(t1;t2;...)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || Error::Validation(format!("cannot parse shift law `{s}`"));
        let (name, rest) = s.split_once('(').ok_or_else(bad)?;
        let args = rest.strip_suffix(')').ok_or_else(bad)?;
        let nums = |sep: char| -> Result<Vec<T>> {
            args.split(sep)
                .filter(|a| !a.trim().is_empty())
                .map(|a| a.trim().parse::<T>().map_err(|_| bad()))
                .collect()
        };
        match name.trim() {
            "uniform" => match nums(',')?.as_slice() {
                [a, b] => Ok(ShiftLaw::Uniform(*a, *b)),
                _ => Err(bad()),
            },
            "gaussian" => match nums(',')?.as_slice() {
                [sd] => Ok(ShiftLaw::Gaussian(*sd)),
                [mean, sd] if *mean == T::zero() => Ok(ShiftLaw::Gaussian(*sd)),
                _ => Err(bad()),
            },
            "fixed" => Ok(ShiftLaw::Fixed(nums(';')?)),
            _ => Err(bad()),
        }
    }
}

impl<T: Real> std::fmt::Display for ShiftLaw<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShiftLaw::Uniform(a, b) => write!(f, "uniform({a},{b})"),
            ShiftLaw::Gaussian(sd) => write!(f, "gaussian({sd})"),
            ShiftLaw::Fixed(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "fixed({})", parts.join(";"))
            }
        }
    }
}

/// Result of an analytic derivative query.
#[derive(Debug, Clone, PartialEq)]
pub enum Derivative<T: Real> {
    Gradient(DVector<T>),
    Hessian(DMatrix<T>),
}

pub struct TeacherNetwork<T: Real> {
    weights: DMatrix<T>,
    shifts: DVector<T>,
    act: Activation<T>,
    seed: Option<u64>,
    clamped: usize,
    queries: AtomicU64,
    oracle_calls: AtomicU64,
}

impl<T: Real> Clone for TeacherNetwork<T> {
    fn clone(&self) -> Self {
        TeacherNetwork {
            weights: self.weights.clone(),
            shifts: self.shifts.clone(),
            act: self.act.clone(),
            seed: self.seed,
            clamped: self.clamped,
            queries: AtomicU64::new(self.query_count()),
            oracle_calls: AtomicU64::new(self.oracle_calls()),
        }
    }
}

impl<T: Real> std::fmt::Debug for TeacherNetwork<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TeacherNetwork")
            .field("d", &self.dim())
            .field("m", &self.neurons())
            .field("act", &self.act)
            .field("seed", &self.seed)
            .field("queries", &self.query_count())
            .finish()
    }
}

/// Draws a teacher with i.i.d. uniform-sphere weights and shifts from `law`.
pub fn sample_teacher<T: Real>(
    d: usize,
    m: usize,
    law: &ShiftLaw<T>,
    act: Activation<T>,
    seed: u64,
) -> Result<TeacherNetwork<T>> {
    if d == 0 || m == 0 {
        return Err(Error::Validation(format!("need D >= 1 and m >= 1, got D={d}, m={m}")));
    }
    let tau_inf = act.tau_inf();
    let mut wrng = seeds::child_rng(seed, "teacher-weights", 0);
    let mut weights = DMatrix::<T>::zeros(d, m);
    for k in 0..m {
        let col = seeds::sphere_vec::<T>(&mut wrng, d);
        weights.column_mut(k).copy_from_slice(&col);
    }
    let mut srng = seeds::child_rng(seed, "teacher-shifts", 0);
    let mut clamped = 0;
    let shifts: Vec<T> = match law {
        ShiftLaw::Uniform(a, b) => {
            if !(a < b) || a.abs().max(b.abs()) > tau_inf {
                return Err(Error::ShiftOutOfRange {
                    value: a.abs().max(b.abs()).as_f64(),
                    tau_inf: tau_inf.as_f64(),
                });
            }
            let (a, b) = (a.as_f64(), b.as_f64());
            (0..m).map(|_| T::lit(srng.random_range(a..b))).collect()
        }
        ShiftLaw::Gaussian(sd) => (0..m)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut srng);
                let t = T::lit(z * sd.as_f64());
                if t.abs() > tau_inf {
                    clamped += 1;
                    t.clamp(-tau_inf, tau_inf)
                } else {
                    t
                }
            })
            .collect(),
        ShiftLaw::Fixed(v) => {
            if v.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: v.len() });
            }
            v.clone()
        }
    };
    let mut net = TeacherNetwork::new(weights, DVector::from_vec(shifts), act)?;
    net.seed = Some(seed);
    net.clamped = clamped;
    Ok(net)
}

impl<T: Real> TeacherNetwork<T> {
    /// Validates unit columns and the shift range.
    pub fn new(weights: DMatrix<T>, shifts: DVector<T>, act: Activation<T>) -> Result<Self> {
        let (d, m) = weights.shape();
        if d == 0 || m == 0 {
            return Err(Error::Validation("empty weight matrix".into()));
        }
        if shifts.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: shifts.len() });
        }
        check_unit_columns(&weights)?;
        check_shift_range(shifts.as_slice(), act.tau_inf())?;
        Ok(TeacherNetwork {
            weights,
            shifts,
            act,
            seed: None,
            clamped: 0,
            queries: AtomicU64::new(0),
            oracle_calls: AtomicU64::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn neurons(&self) -> usize {
        self.weights.ncols()
    }

    /// `D × m`, unit columns.
    pub fn weights(&self) -> &DMatrix<T> {
        &self.weights
    }

    pub fn shifts(&self) -> &DVector<T> {
        &self.shifts
    }

    pub fn activation(&self) -> &Activation<T> {
        &self.act
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Number of Gaussian shift draws that were clamped to `±tau_inf`.
    pub fn clamped_shifts(&self) -> usize {
        self.clamped
    }

    /// Scalar network evaluations served by [`eval`](Self::eval).
    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    /// Calls to the analytic derivative oracles.
    pub fn oracle_calls(&self) -> u64 {
        self.oracle_calls.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.queries.store(0, Ordering::Relaxed);
        self.oracle_calls.store(0, Ordering::Relaxed);
    }

    /// Counted black-box query `f(x)`.
    pub fn eval(&self, x: &[T]) -> Result<T> {
        self.check_dim(x)?;
        Ok(self.query(x))
    }

    /// Counted query without the dimension check.
    #[inline]
    pub(crate) fn query(&self, x: &[T]) -> T {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.value(x)
    }

    /// Evaluation that does not count against the query budget; used only for
    /// scoring against ground truth.
    pub fn eval_uncounted(&self, x: &[T]) -> Result<T> {
        self.check_dim(x)?;
        Ok(self.value(x))
    }

    #[inline]
    fn value(&self, x: &[T]) -> T {
        let mut acc = T::zero();
        for k in 0..self.neurons() {
            acc += self.act.g(self.preactivation(k, x));
        }
        acc
    }

    #[inline]
    fn preactivation(&self, k: usize, x: &[T]) -> T {
        let col = self.weights.column(k);
        let mut z = self.shifts[k];
        for (w, xi) in col.iter().zip(x) {
            z += *w * *xi;
        }
        z
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    /// Exact gradient (`order = 1`) or Hessian (`order = 2`) at `x`.
    /// Counted as an oracle call, never as a network query.
    pub fn analytic_derivatives(&self, x: &[T], order: u32) -> Result<Derivative<T>> {
        match order {
            1 => self.analytic_gradient(x).map(Derivative::Gradient),
            2 => self.analytic_hessian(x).map(Derivative::Hessian),
            _ => Err(Error::Precondition(format!("derivative order must be 1 or 2, got {order}"))),
        }
    }

    pub fn analytic_gradient(&self, x: &[T]) -> Result<DVector<T>> {
        self.check_dim(x)?;
        self.oracle_calls.fetch_add(1, Ordering::Relaxed);
        let mut grad = DVector::zeros(self.dim());
        for k in 0..self.neurons() {
            let c = self.act.d1(self.preactivation(k, x));
            grad.axpy(c, &self.weights.column(k), T::one());
        }
        Ok(grad)
    }

    /// `Σ_k g″(⟨w_k, x⟩ + τ_k) w_k w_kᵀ`.
    pub fn analytic_hessian(&self, x: &[T]) -> Result<DMatrix<T>> {
        self.check_dim(x)?;
        self.oracle_calls.fetch_add(1, Ordering::Relaxed);
        let d = self.dim();
        let mut hess = DMatrix::zeros(d, d);
        for k in 0..self.neurons() {
            let c = self.act.d2(self.preactivation(k, x));
            let w = self.weights.column(k);
            hess.ger(c, &w, &w, T::one());
        }
        Ok(hess)
    }

    /// `dⁿ/dtⁿ f(x + t u)` at `t = 0`, for `n ∈ 1..=3`.
    pub fn analytic_directional(&self, x: &[T], u: &[T], n: u32) -> Result<T> {
        self.check_dim(x)?;
        self.check_dim(u)?;
        if !(1..=3).contains(&n) {
            return Err(Error::Precondition(format!("directional order must be 1..=3, got {n}")));
        }
        self.oracle_calls.fetch_add(1, Ordering::Relaxed);
        let mut acc = T::zero();
        for k in 0..self.neurons() {
            let proj = self.weights.column(k).iter().zip(u).fold(T::zero(), |a, (w, ui)| a + *w * *ui);
            acc += self.act.derivative(n, self.preactivation(k, x)) * proj.powi(n as i32);
        }
        Ok(acc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = write_network(&self.weights, self.shifts.as_slice(), &self.act, self.seed);
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let parsed = parse_network::<T>(text)?;
        let mut net = TeacherNetwork::new(parsed.weights, parsed.shifts, parsed.act)?;
        net.seed = parsed.seed;
        Ok(net)
    }

    pub fn to_text(&self) -> String {
        write_network(&self.weights, self.shifts.as_slice(), &self.act, self.seed)
    }
}

/// Student `f̂(x) = Σ_k g(s_k ⟨ŵ_k, x⟩ + τ̂_k)` with its own sign vector.
#[derive(Debug, Clone)]
pub struct StudentNetwork<T: Real> {
    w_hat: DMatrix<T>,
    signs: Vec<i8>,
    shifts: DVector<T>,
    act: Activation<T>,
}

impl<T: Real> StudentNetwork<T> {
    pub fn new(w_hat: DMatrix<T>, signs: Vec<i8>, shifts: DVector<T>, act: Activation<T>) -> Result<Self> {
        let m = w_hat.ncols();
        if signs.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: signs.len() });
        }
        if shifts.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: shifts.len() });
        }
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::Validation("signs must be +1 or -1".into()));
        }
        check_unit_columns(&w_hat)?;
        check_shift_range(shifts.as_slice(), act.tau_inf())?;
        Ok(StudentNetwork { w_hat, signs, shifts, act })
    }

    /// Student with all signs `+1`.
    pub fn unsigned(w_hat: DMatrix<T>, shifts: DVector<T>, act: Activation<T>) -> Result<Self> {
        let m = w_hat.ncols();
        Self::new(w_hat, vec![1; m], shifts, act)
    }

    pub fn dim(&self) -> usize {
        self.w_hat.nrows()
    }

    pub fn neurons(&self) -> usize {
        self.w_hat.ncols()
    }

    pub fn w_hat(&self) -> &DMatrix<T> {
        &self.w_hat
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn shifts(&self) -> &DVector<T> {
        &self.shifts
    }

    pub fn activation(&self) -> &Activation<T> {
        &self.act
    }

    /// Columns `s_k ŵ_k`.
    pub fn effective_weights(&self) -> DMatrix<T> {
        let mut w = self.w_hat.clone();
        for (k, s) in self.signs.iter().enumerate() {
            if *s < 0 {
                w.column_mut(k).neg_mut();
            }
        }
        w
    }

    /// `Ŵ ← Ŵ diag(s)`, signs reset to `+1`.
    pub fn fold_signs(&self) -> Self {
        StudentNetwork {
            w_hat: self.effective_weights(),
            signs: vec![1; self.neurons()],
            shifts: self.shifts.clone(),
            act: self.act.clone(),
        }
    }

    /// Replaces the shifts without range checks.
    pub fn with_shifts(&self, shifts: DVector<T>) -> Self {
        StudentNetwork { shifts, ..self.clone() }
    }

    pub fn eval(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let mut acc = T::zero();
        for k in 0..self.neurons() {
            let s = T::lit(self.signs[k] as f64);
            let dot = self.w_hat.column(k).iter().zip(x).fold(T::zero(), |a, (w, xi)| a + *w * *xi);
            acc += self.act.g(s * dot + self.shifts[k]);
        }
        Ok(acc)
    }

    /// Saves in the network file format with signs folded into the weights.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let folded = self.fold_signs();
        fs::write(path, write_network(&folded.w_hat, folded.shifts.as_slice(), &self.act, None))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let parsed = parse_network::<T>(&fs::read_to_string(path)?)?;
        Self::unsigned(parsed.weights, parsed.shifts, parsed.act)
    }
}

fn check_unit_columns<T: Real>(w: &DMatrix<T>) -> Result<()> {
    let tol = T::tol(1e-12);
    for (k, col) in w.column_iter().enumerate() {
        let norm = col.norm();
        if (norm - T::one()).abs() > tol || !norm.is_finite() {
            return Err(Error::Validation(format!("weight column {k} has norm {norm}, expected 1")));
        }
    }
    Ok(())
}

fn check_shift_range<T: Real>(shifts: &[T], tau_inf: T) -> Result<()> {
    for t in shifts {
        if !(t.abs() <= tau_inf) {
            return Err(Error::ShiftOutOfRange { value: t.as_f64(), tau_inf: tau_inf.as_f64() });
        }
    }
    Ok(())
}

pub(crate) struct ParsedNetwork<T: Real> {
    pub weights: DMatrix<T>,
    pub shifts: DVector<T>,
    pub act: Activation<T>,
    pub seed: Option<u64>,
}

/// Header `D m activation tau_inf seed`, then one line per neuron holding the
/// weight column followed by the shift.
pub(crate) fn write_network<T: Real>(
    weights: &DMatrix<T>,
    shifts: &[T],
    act: &Activation<T>,
    seed: Option<u64>,
) -> String {
    let (d, m) = weights.shape();
    let mut out = String::new();
    let seed = seed.map_or_else(|| "-".to_string(), |s| s.to_string());
    writeln!(out, "# D m activation tau_inf seed").unwrap();
    writeln!(out, "{d} {m} {} {} {seed}", act.kind(), act.tau_inf()).unwrap();
    for k in 0..m {
        let mut line: Vec<String> = weights.column(k).iter().map(|v| v.to_string()).collect();
        line.push(shifts[k].to_string());
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    out
}

/// Non-comment, non-blank lines with their 1-based line numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

pub(crate) fn parse_field<V: FromStr>(tok: &str, line: usize, what: &str) -> Result<V> {
    tok.parse::<V>().map_err(|_| Error::Parse { line, msg: format!("invalid {what} `{tok}`") })
}

pub(crate) fn parse_network<T: Real>(text: &str) -> Result<ParsedNetwork<T>> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "missing header".into() })?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 5 {
        return Err(Error::Parse { line: hline, msg: format!("header needs 5 fields, found {}", toks.len()) });
    }
    let d: usize = parse_field(toks[0], hline, "dimension")?;
    let m: usize = parse_field(toks[1], hline, "neuron count")?;
    let kind: ActivationKind = toks[2]
        .parse()
        .map_err(|e: Error| Error::Parse { line: hline, msg: e.to_string() })?;
    let tau_inf: T = parse_field(toks[3], hline, "tau_inf")?;
    let seed = match toks[4] {
        "-" => None,
        s => Some(parse_field::<u64>(s, hline, "seed")?),
    };
    let act = Activation::from_kind(kind)?;
    let act = if act.tau_inf() == tau_inf { act } else { act.with_tau_inf(tau_inf)? };
    if d == 0 || m == 0 {
        return Err(Error::Parse { line: hline, msg: "D and m must be positive".into() });
    }
    let mut weights = DMatrix::<T>::zeros(d, m);
    let mut shifts = DVector::<T>::zeros(m);
    let mut last = hline;
    for k in 0..m {
        let (ln, line) = lines.next().ok_or(Error::Parse {
            line: last + 1,
            msg: format!("truncated file: expected {m} neuron lines, found {k}"),
        })?;
        last = ln;
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != d + 1 {
            return Err(Error::Parse { line: ln, msg: format!("expected {} values, found {}", d + 1, vals.len()) });
        }
        for i in 0..d {
            weights[(i, k)] = parse_field(vals[i], ln, "weight")?;
        }
        shifts[k] = parse_field(vals[d], ln, "shift")?;
    }
    if let Some((ln, _)) = lines.next() {
        return Err(Error::Parse { line: ln, msg: "unexpected trailing data".into() });
    }
    Ok(ParsedNetwork { weights, shifts, act, seed })
}
