//! Shift refinement by gradient descent on the least-squares loss
//! `J(τ̂) = (1/2N) Σ_i (f̂(x_i, τ̂) − y_i)²` with the weights frozen.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seeds;
use crate::teacher::{StudentNetwork, TeacherNetwork};

/// Window of the divergence guard.
pub const DIVERGENCE_WINDOW: usize = 50;
const POWER_ITERATIONS: usize = 500;

/// Labeled training points; row `i` of `x` is the input `x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples<T: Real> {
    pub x: DMatrix<T>,
    pub y: DVector<T>,
}

impl<T: Real> Samples<T> {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Draws `n` standard Gaussian inputs and labels them with counted queries.
pub fn draw_samples<T: Real>(net: &TeacherNetwork<T>, n: usize, seed: u64) -> Result<Samples<T>> {
    let d = net.dim();
    let mut rng = seeds::child_rng(seed, "train-samples", 0);
    let mut x = DMatrix::zeros(n, d);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let xi: Vec<T> = seeds::gaussian_vec(&mut rng, d);
        y[i] = net.eval(&xi)?;
        for (j, v) in xi.into_iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    Ok(Samples { x, y })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize<T> {
    Fixed(T),
    /// `0.9 / λ̂_max` of the empirical kernel at the initial shifts.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig<T> {
    pub n_train: usize,
    pub gamma: StepSize<T>,
    /// 0 for full-batch gradient descent.
    pub batch: usize,
    pub max_steps: usize,
    /// Early stop once the full training loss falls below this (checked every
    /// step for full batch, once per epoch for mini-batches).
    pub stop_loss: T,
    pub wall_clock_limit: Duration,
    /// Compare the gradient with finite differences of the loss every this
    /// many steps.
    pub audit_every: Option<usize>,
}

impl<T: Real> Default for RefineConfig<T> {
    fn default() -> Self {
        RefineConfig {
            n_train: 1000,
            gamma: StepSize::Fixed(T::lit(1e-3)),
            batch: 64,
            max_steps: 10_000,
            stop_loss: T::lit(1e-8),
            wall_clock_limit: Duration::from_secs(180),
            audit_every: None,
        }
    }
}

impl<T: Real> RefineConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 {
            return Err(Error::Validation("N_train must be positive".into()));
        }
        if let StepSize::Fixed(g) = self.gamma {
            if !(g > T::zero()) || !g.is_finite() {
                return Err(Error::Validation(format!("learning rate must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

/// Precomputed `z_ik = ⟨a_k, x_i⟩` for the effective student weights `a_k`.
pub struct LossKernel<'a, T: Real> {
    z: DMatrix<T>,
    y: &'a DVector<T>,
    act: Activation<T>,
}

impl<'a, T: Real> LossKernel<'a, T> {
    pub fn new(student: &StudentNetwork<T>, samples: &'a Samples<T>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        if samples.x.ncols() != student.dim() {
            return Err(Error::DimensionMismatch { expected: student.dim(), got: samples.x.ncols() });
        }
        Ok(LossKernel { z: &samples.x * student.effective_weights(), y: &samples.y, act: student.activation().clone() })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    #[inline]
    fn residual(&self, i: usize, tau: &DVector<T>) -> T {
        let mut f = T::zero();
        for k in 0..tau.len() {
            f += self.act.g(self.z[(i, k)] + tau[k]);
        }
        f - self.y[i]
    }

    /// Full loss `(1/2N) Σ r_i²`.
    pub fn loss(&self, tau: &DVector<T>) -> T {
        let mut acc = T::zero();
        for i in 0..self.len() {
            let r = self.residual(i, tau);
            acc += r * r;
        }
        acc / (T::lit(2.0) * T::from_count(self.len()))
    }

    /// Loss and gradient over the given rows, normalized by their count.
    pub fn loss_grad_rows(&self, tau: &DVector<T>, rows: impl Iterator<Item = usize>, grad: &mut DVector<T>) -> T {
        let m = tau.len();
        grad.fill(T::zero());
        let mut acc = T::zero();
        let mut count = 0usize;
        let mut d1 = vec![T::zero(); m];
        for i in rows {
            let mut f = T::zero();
            for k in 0..m {
                let (g, dg) = self.act.g_d1(self.z[(i, k)] + tau[k]);
                f += g;
                d1[k] = dg;
            }
            let r = f - self.y[i];
            acc += r * r;
            for k in 0..m {
                grad[k] += r * d1[k];
            }
            count += 1;
        }
        let n = T::from_count(count.max(1));
        *grad /= n;
        acc / (T::lit(2.0) * n)
    }

    pub fn loss_grad(&self, tau: &DVector<T>) -> (T, DVector<T>) {
        let mut grad = DVector::zeros(tau.len());
        let l = self.loss_grad_rows(tau, 0..self.len(), &mut grad);
        (l, grad)
    }

    /// Largest eigenvalue of `Â = (1/2N) Σ F_i F_iᵀ`, `F_ik = g′(z_ik + τ_k)`,
    /// by power iteration.
    pub fn kernel_lambda_max(&self, tau: &DVector<T>) -> T {
        let m = tau.len();
        let n = self.len();
        let f = DMatrix::from_fn(n, m, |i, k| self.act.d1(self.z[(i, k)] + tau[k]));
        let scale = T::one() / (T::lit(2.0) * T::from_count(n));
        let mut v = DVector::repeat(m, T::one() / T::from_count(m).sqrt());
        let mut lambda = T::zero();
        for _ in 0..POWER_ITERATIONS {
            let w = f.tr_mul(&(&f * &v)) * scale;
            let norm = w.norm();
            if !(norm > T::zero()) {
                return T::zero();
            }
            let next = v.dot(&w);
            v = w / norm;
            if (next - lambda).abs() <= T::tol(1e-12) * next.abs() {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda
    }
}

/// `(1/2N) Σ (f̂(x_i) − y_i)²`.
pub fn loss<T: Real>(student: &StudentNetwork<T>, samples: &Samples<T>) -> Result<T> {
    Ok(LossKernel::new(student, samples)?.loss(student.shifts()))
}

/// Gradient of [`loss`] with respect to the shifts.
pub fn grad_loss<T: Real>(student: &StudentNetwork<T>, samples: &Samples<T>) -> Result<DVector<T>> {
    Ok(LossKernel::new(student, samples)?.loss_grad(student.shifts()).1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxSteps,
    StopLoss,
    WallClock,
}

impl StopReason {
    pub fn label(self) -> &'static str {
        match self {
            StopReason::MaxSteps => "max_steps",
            StopReason::StopLoss => "stop_loss",
            StopReason::WallClock => "wall_clock",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub step: usize,
    /// Full-batch loss, or the mini-batch loss of this step.
    pub loss: f64,
    /// `‖τ̂ − τ‖₂` when the aligned truth was supplied.
    pub shift_err: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RefineOutcome<T: Real> {
    pub student: StudentNetwork<T>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub steps: usize,
    pub epochs: usize,
    pub stop: StopReason,
    pub gamma: T,
    pub lambda_max: T,
    pub initial_loss: T,
    pub final_loss: T,
    /// Geometric per-step ratio fitted to the shift error (or to the square
    /// root of the loss when no truth is available).
    pub fitted_ratio: f64,
    /// Largest gradient-versus-finite-difference deviation seen in audits.
    pub audit_max_err: Option<f64>,
    /// Network queries spent labeling training points.
    pub queries: u64,
    pub elapsed: Duration,
}

/// Draws `cfg.n_train` labeled points from the teacher and refines the shifts.
pub fn refine<T: Real>(
    student: &StudentNetwork<T>,
    teacher: &TeacherNetwork<T>,
    cfg: &RefineConfig<T>,
    seed: u64,
    truth_shifts: Option<&DVector<T>>,
) -> Result<RefineOutcome<T>> {
    cfg.validate()?;
    let before = teacher.query_count();
    let samples = draw_samples(teacher, cfg.n_train, seed)?;
    let queries = teacher.query_count() - before;
    let mut out = refine_on_samples(student, &samples, cfg, seed, truth_shifts)?;
    out.queries = queries;
    Ok(out)
}

fn fitted_ratio(traj: &[TrajectoryPoint]) -> f64 {
    let series: Vec<(usize, f64)> = traj
        .iter()
        .filter_map(|p| match p.shift_err {
            Some(e) => Some((p.step, e)),
            None => Some((p.step, p.loss.max(0.0).sqrt())),
        })
        .filter(|(_, v)| *v > 0.0 && v.is_finite())
        .collect();
    if series.len() < 2 {
        return f64::NAN;
    }
    let n = series.len() as f64;
    let (sx, sy) = series.iter().fold((0.0, 0.0), |a, (s, v)| (a.0 + *s as f64, a.1 + v.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut cov, mut var) = (0.0, 0.0);
    for (s, v) in &series {
        cov += (*s as f64 - mx) * (v.ln() - my);
        var += (*s as f64 - mx).powi(2);
    }
    if var > 0.0 {
        (cov / var).exp()
    } else {
        f64::NAN
    }
}

fn audit<T: Real>(kernel: &LossKernel<T>, tau: &DVector<T>, grad: &DVector<T>) -> f64 {
    let h = T::lit(1e-6);
    let mut worst: f64 = 0.0;
    let mut probe = tau.clone();
    for k in 0..tau.len() {
        probe[k] = tau[k] + h;
        let lp = kernel.loss(&probe);
        probe[k] = tau[k] - h;
        let lm = kernel.loss(&probe);
        probe[k] = tau[k];
        let fd = (lp - lm) / (T::lit(2.0) * h);
        worst = worst.max((fd - grad[k]).as_f64().abs());
    }
    worst
}

/// Gradient descent on fixed samples. Mini-batches follow a per-epoch
/// permutation drawn from `seed`, so the trajectory is reproducible.
pub fn refine_on_samples<T: Real>(
    student: &StudentNetwork<T>,
    samples: &Samples<T>,
    cfg: &RefineConfig<T>,
    seed: u64,
    truth_shifts: Option<&DVector<T>>,
) -> Result<RefineOutcome<T>> {
    cfg.validate()?;
    let start = Instant::now();
    let kernel = LossKernel::new(student, samples)?;
    let n = kernel.len();
    let m = student.neurons();
    if let Some(t) = truth_shifts {
        if t.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: t.len() });
        }
    }
    let mut tau = student.shifts().clone();
    let lambda_max = kernel.kernel_lambda_max(&tau);
    let stable_step = if lambda_max > T::zero() { (T::one() / lambda_max).as_f64() } else { f64::INFINITY };
    let gamma = match cfg.gamma {
        StepSize::Fixed(g) => g,
        StepSize::Auto => T::lit(0.9) / lambda_max.max(T::tol(1e-12)),
    };
    let err_of = |tau: &DVector<T>| truth_shifts.map(|t| (tau - t).norm().as_f64());
    let initial_loss = kernel.loss(&tau);
    let mut trajectory = vec![TrajectoryPoint { step: 0, loss: initial_loss.as_f64(), shift_err: err_of(&tau) }];
    let mut guard: Vec<f64> = vec![initial_loss.as_f64()];
    let check_guard = |guard: &[f64], step: usize| -> Result<()> {
        let last = *guard.last().expect("guard series starts non-empty");
        let diverged = !last.is_finite()
            || (guard.len() > DIVERGENCE_WINDOW
                && last >= guard[guard.len() - 1 - DIVERGENCE_WINDOW]
                && last > guard[0]);
        if diverged {
            return Err(Error::Divergence { step, gamma: gamma.as_f64(), stable_step });
        }
        Ok(())
    };
    let full_batch = cfg.batch == 0 || cfg.batch >= n;
    let mut grad = DVector::zeros(m);
    let mut audit_max_err: Option<f64> = None;
    let mut order: Vec<usize> = (0..n).collect();
    let mut steps = 0;
    let mut epochs = 0;
    let mut pos = n;
    let mut stop = StopReason::MaxSteps;
    let mut current_loss = initial_loss;
    if current_loss < cfg.stop_loss {
        stop = StopReason::StopLoss;
    }
    while stop != StopReason::StopLoss && steps < cfg.max_steps {
        if steps % 64 == 0 && start.elapsed() >= cfg.wall_clock_limit {
            stop = StopReason::WallClock;
            break;
        }
        let batch_loss = if full_batch {
            kernel.loss_grad_rows(&tau, 0..n, &mut grad)
        } else {
            if pos >= n {
                order.shuffle(&mut seeds::child_rng(seed, "sgd-epoch", epochs as u64));
                pos = 0;
            }
            let end = (pos + cfg.batch).min(n);
            let l = kernel.loss_grad_rows(&tau, order[pos..end].iter().copied(), &mut grad);
            pos = end;
            l
        };
        if let Some(every) = cfg.audit_every {
            if every > 0 && steps % every == 0 {
                let (_, full) = kernel.loss_grad(&tau);
                let e = audit(&kernel, &tau, &full);
                audit_max_err = Some(audit_max_err.map_or(e, |a| a.max(e)));
            }
        }
        tau.axpy(-gamma, &grad, T::one());
        steps += 1;
        if full_batch {
            current_loss = kernel.loss(&tau);
            trajectory.push(TrajectoryPoint { step: steps, loss: current_loss.as_f64(), shift_err: err_of(&tau) });
            guard.push(current_loss.as_f64());
            check_guard(&guard, steps)?;
            if current_loss < cfg.stop_loss {
                stop = StopReason::StopLoss;
            }
        } else {
            trajectory.push(TrajectoryPoint { step: steps, loss: batch_loss.as_f64(), shift_err: err_of(&tau) });
            if !batch_loss.is_finite() || tau.iter().any(|t| !t.is_finite()) {
                return Err(Error::Divergence { step: steps, gamma: gamma.as_f64(), stable_step });
            }
            if pos >= n {
                epochs += 1;
                current_loss = kernel.loss(&tau);
                guard.push(current_loss.as_f64());
                check_guard(&guard, steps)?;
                if current_loss < cfg.stop_loss {
                    stop = StopReason::StopLoss;
                }
            }
        }
    }
    if full_batch {
        epochs = steps;
    } else if pos < n && steps > 0 {
        current_loss = kernel.loss(&tau);
    }
    let ratio = fitted_ratio(&trajectory);
    Ok(RefineOutcome {
        student: student.with_shifts(tau),
        trajectory,
        steps,
        epochs,
        stop,
        gamma,
        lambda_max,
        initial_loss,
        final_loss: current_loss,
        fitted_ratio: ratio,
        audit_max_err,
        queries: 0,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teacher::{sample_teacher, ShiftLaw};

    fn teacher(d: usize, m: usize, seed: u64) -> TeacherNetwork<f64> {
        sample_teacher(d, m, &ShiftLaw::Uniform(-0.5, 0.5), Activation::tanh(), seed).unwrap()
    }

    fn student_with(t: &TeacherNetwork<f64>, tau: DVector<f64>) -> StudentNetwork<f64> {
        StudentNetwork::unsigned(t.weights().clone(), tau, Activation::tanh()).unwrap()
    }

    fn naive_loss(student: &StudentNetwork<f64>, s: &Samples<f64>) -> f64 {
        let mut acc = 0.0;
        for i in 0..s.len() {
            let x: Vec<f64> = s.x.row(i).iter().copied().collect();
            let r = student.eval(&x).unwrap() - s.y[i];
            acc += r * r;
        }
        acc / (2.0 * s.len() as f64)
    }

    fn perturbed(t: &TeacherNetwork<f64>, seed: u64, radius: f64) -> DVector<f64> {
        let mut rng = seeds::rng(seed);
        let dir = DVector::from_vec(seeds::sphere_vec::<f64>(&mut rng, t.neurons()));
        (t.shifts() + dir * radius).map(|v| v.clamp(-0.6, 0.6))
    }

    #[test]
    fn zero_loss_and_gradient_at_the_truth() {
        let t = teacher(6, 5, 1);
        let s = draw_samples(&t, 200, 2).unwrap();
        assert_eq!(t.query_count(), 200);
        let st = student_with(&t, t.shifts().clone());
        assert!(loss(&st, &s).unwrap() <= 1e-20);
        assert!(grad_loss(&st, &s).unwrap().amax() <= 1e-15);
    }

    #[test]
    fn scalar_closed_forms() {
        let (tau, delta) = (0.2, 0.15);
        let w = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let act = Activation::<f64>::tanh();
        let s = Samples { x: DMatrix::zeros(1, 2), y: DVector::from_vec(vec![act.g(tau)]) };
        let st = StudentNetwork::unsigned(w, DVector::from_vec(vec![tau + delta]), act.clone()).unwrap();
        let expected = 0.5 * (act.g(tau) - act.g(tau + delta)).powi(2);
        assert!((loss(&st, &s).unwrap() - expected).abs() <= 1e-16);
        let g = grad_loss(&st, &s).unwrap();
        let hand = (act.g(tau + delta) - act.g(tau)) * act.d1(tau + delta);
        assert!((g[0] - hand).abs() <= 1e-16);
    }

    #[test]
    fn loss_matches_naive_double_loop() {
        for seed in 0..5 {
            let t = teacher(7, 6, seed);
            let s = draw_samples(&t, 150, seed).unwrap();
            let st = student_with(&t, perturbed(&t, seed, 0.3));
            let fast = loss(&st, &s).unwrap();
            let slow = naive_loss(&st, &s);
            assert!((fast - slow).abs() <= 1e-12 * slow.abs());
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..10 {
            let t = teacher(4 + seed as usize % 7, 3 + seed as usize % 10, seed);
            let s = draw_samples(&t, 100, seed).unwrap();
            let st = student_with(&t, perturbed(&t, seed + 9, 0.2));
            let kernel = LossKernel::new(&st, &s).unwrap();
            let g = grad_loss(&st, &s).unwrap();
            assert!(audit(&kernel, st.shifts(), &g) <= 1e-6);
        }
    }

    #[test]
    fn empty_samples_are_rejected() {
        let t = teacher(3, 2, 1);
        let s = Samples { x: DMatrix::zeros(0, 3), y: DVector::zeros(0) };
        assert!(matches!(loss(&student_with(&t, t.shifts().clone()), &s), Err(Error::EmptySamples)));
    }

    #[test]
    fn full_batch_converges_geometrically_from_a_close_start() {
        let (d, m) = (10, 12);
        let mut ok = 0;
        for seed in 0..10 {
            let t = teacher(d, m, 40 + seed);
            let init = perturbed(&t, seed, 0.1 / (m as f64).sqrt());
            let cfg = RefineConfig {
                n_train: m * d * d,
                gamma: StepSize::Auto,
                batch: 0,
                max_steps: 10_000,
                stop_loss: 1e-16,
                ..RefineConfig::default()
            };
            let out = refine(&student_with(&t, init), &t, &cfg, seed, Some(t.shifts())).unwrap();
            let last = out.trajectory.last().unwrap().shift_err.unwrap();
            if last <= 1e-6 && out.fitted_ratio < 1.0 {
                ok += 1;
            }
        }
        assert!(ok >= 9, "{ok}/10");
    }

    #[test]
    fn default_step_decreases_the_error_geometrically() {
        let (d, m) = (10, 12);
        let t = teacher(d, m, 41);
        let init = perturbed(&t, 1, 0.1 / (m as f64).sqrt());
        let cfg = RefineConfig { n_train: m * d * d, batch: 0, max_steps: 2000, stop_loss: 0.0, ..RefineConfig::default() };
        let out = refine(&student_with(&t, init), &t, &cfg, 1, Some(t.shifts())).unwrap();
        let errs: Vec<f64> = out.trajectory.iter().map(|p| p.shift_err.unwrap()).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]));
        assert!(out.fitted_ratio < 1.0);
    }

    #[test]
    fn loss_does_not_increase_below_the_stable_step() {
        let t = teacher(8, 10, 3);
        let s = draw_samples(&t, 800, 3).unwrap();
        let st = student_with(&t, perturbed(&t, 3, 0.3));
        let cfg = RefineConfig { batch: 0, gamma: StepSize::Auto, max_steps: 300, stop_loss: 0.0, ..RefineConfig::default() };
        let out = refine_on_samples(&st, &s, &cfg, 0, None).unwrap();
        assert!(out.lambda_max > 0.0);
        assert!((out.gamma - 0.9 / out.lambda_max).abs() <= 1e-12);
        for w in out.trajectory.windows(2) {
            assert!(w[1].loss <= w[0].loss * (1.0 + 1e-12), "{} -> {}", w[0].loss, w[1].loss);
        }
    }

    #[test]
    fn perturbed_weights_leave_a_floor_below_the_initial_error() {
        let (d, m) = (10, 12);
        let t = teacher(d, m, 5);
        let mut rng = seeds::rng(5);
        let mut w = t.weights().clone();
        for mut c in w.column_iter_mut() {
            c += DVector::from_vec(seeds::sphere_vec::<f64>(&mut rng, d)) * 1e-3;
            let n = c.norm();
            c /= n;
        }
        let init = perturbed(&t, 1, 0.1 / (m as f64).sqrt());
        let init_err = (&init - t.shifts()).norm();
        let st = StudentNetwork::unsigned(w, init, Activation::tanh()).unwrap();
        let cfg = RefineConfig { n_train: m * d * d, batch: 0, max_steps: 10_000, stop_loss: 0.0, ..RefineConfig::default() };
        let out = refine(&st, &t, &cfg, 2, Some(t.shifts())).unwrap();
        let final_err = out.trajectory.last().unwrap().shift_err.unwrap();
        assert!(final_err > 0.0 && final_err <= init_err, "{final_err} vs {init_err}");
    }

    #[test]
    fn huge_step_triggers_the_guard() {
        let t = teacher(10, 12, 6);
        let st = student_with(&t, perturbed(&t, 6, 0.05));
        let cfg = RefineConfig { n_train: 500, gamma: StepSize::Fixed(10.0), batch: 0, max_steps: 2000, ..RefineConfig::default() };
        match refine(&st, &t, &cfg, 1, None) {
            Err(Error::Divergence { gamma, stable_step, .. }) => {
                assert_eq!(gamma, 10.0);
                assert!(stable_step < 10.0);
            }
            other => panic!("expected divergence, got {:?}", other.map(|o| o.final_loss)),
        }
    }

    #[test]
    fn sgd_is_deterministic_and_stops_by_the_step_budget() {
        let t = teacher(6, 5, 7);
        let st = student_with(&t, perturbed(&t, 7, 0.1));
        let cfg = RefineConfig { n_train: 300, max_steps: 700, stop_loss: 0.0, ..RefineConfig::default() };
        let a = refine(&st, &t, &cfg, 11, Some(t.shifts())).unwrap();
        let b = refine(&st, &t, &cfg, 11, Some(t.shifts())).unwrap();
        assert_eq!(a.student.shifts(), b.student.shifts());
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.stop, StopReason::MaxSteps);
        assert_eq!(a.steps, 700);
        assert_eq!(a.epochs, 700 / 5);
        assert_eq!(a.queries, 300);
        let c = refine(&st, &t, &cfg, 12, Some(t.shifts())).unwrap();
        assert_ne!(a.student.shifts(), c.student.shifts());
    }

    #[test]
    fn stop_loss_and_wall_clock() {
        let t = teacher(5, 4, 8);
        let st = student_with(&t, t.shifts().clone());
        let cfg = RefineConfig { n_train: 100, ..RefineConfig::default() };
        let out = refine(&st, &t, &cfg, 0, None).unwrap();
        assert_eq!(out.stop, StopReason::StopLoss);
        assert_eq!(out.steps, 0);
        let st = student_with(&t, perturbed(&t, 1, 0.2));
        let cfg = RefineConfig { n_train: 100, wall_clock_limit: Duration::ZERO, stop_loss: 0.0, ..RefineConfig::default() };
        let out = refine(&st, &t, &cfg, 0, None).unwrap();
        assert_eq!(out.stop, StopReason::WallClock);
    }

    #[test]
    fn spot_audits_during_a_long_run() {
        let t = teacher(6, 6, 9);
        let st = student_with(&t, perturbed(&t, 9, 0.2));
        let cfg = RefineConfig { n_train: 400, max_steps: 2000, audit_every: Some(100), stop_loss: 0.0, ..RefineConfig::default() };
        let out = refine(&st, &t, &cfg, 3, None).unwrap();
        assert!(out.audit_max_err.unwrap() <= 1e-6);
    }
}
