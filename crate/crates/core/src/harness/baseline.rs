//! Joint SGD on weights and shifts of a student with the teacher's architecture.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use super::artifacts::{STUDENT_FILE, TEACHER_FILE};
use super::config::PipelineConfig;
use super::pipeline::{finish, Artifacts, ExperimentResult, RefineSummary, StageClock};
use crate::activation::Activation;
use crate::diagnostics::{align_columns, e_inf, match_and_score};
use crate::error::Result;
use crate::refine::{draw_samples, StopReason};
use crate::seeds;
use crate::teacher::{sample_teacher, StudentNetwork, TeacherNetwork};

pub const TRACE_FILE: &str = "baseline_trace.csv";

/// Per-epoch record of a baseline run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub e_inf: f64,
}

#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub result: ExperimentResult,
    /// `E∞` on a fixed held-out set before training and after every epoch.
    pub trace: Vec<EpochRecord>,
    pub student: StudentNetwork<f64>,
}

/// Samples a teacher from the config and trains the baseline against it.
pub fn run_baseline_sgd(cfg: &PipelineConfig) -> Result<BaselineResult> {
    cfg.validate()?;
    let act = Activation::from_kind(cfg.activation)?;
    let arts = Artifacts::new(cfg.out_dir.as_deref())?;
    let mut clock = StageClock::new();
    let teacher = clock.run(&arts, "teacher", || {
        let t = sample_teacher(cfg.d, cfg.m(), &cfg.shift_law, act.clone(), cfg.seed)?;
        arts.with(TEACHER_FILE, |p| t.save(p))?;
        Ok(t)
    })?;
    baseline_on(cfg, &teacher, clock, &arts)
}

/// Trains the baseline against a given teacher.
pub fn run_baseline_on(cfg: &PipelineConfig, teacher: &TeacherNetwork<f64>) -> Result<BaselineResult> {
    let cfg = PipelineConfig {
        d: teacher.dim(),
        neurons: super::config::NeuronCount::Explicit(teacher.neurons()),
        activation: teacher.activation().kind(),
        ..cfg.clone()
    };
    cfg.validate()?;
    let arts = Artifacts::new(cfg.out_dir.as_deref())?;
    arts.with(TEACHER_FILE, |p| teacher.save(p))?;
    baseline_on(&cfg, teacher, StageClock::new(), &arts)
}

fn baseline_on<'a>(
    cfg: &PipelineConfig,
    teacher: &'a TeacherNetwork<f64>,
    mut clock: StageClock<'a>,
    arts: &Artifacts,
) -> Result<BaselineResult> {
    let start = Instant::now();
    clock.attach(teacher);
    let (d, m, seed) = (teacher.dim(), teacher.neurons(), cfg.seed);
    let b = &cfg.baseline;
    let act = teacher.activation().clone();
    let mut w = DMatrix::zeros(d, m);
    let mut rng = seeds::child_rng(seed, "baseline-init", 0);
    for k in 0..m {
        w.set_column(k, &DVector::from_vec(seeds::sphere_vec::<f64>(&mut rng, d)));
    }
    let mut tau = DVector::<f64>::zeros(m);
    let (student, trace, steps, epochs, stop) = clock.run(arts, "refine", || {
        let samples = draw_samples(teacher, cfg.baseline_n_train(), seeds::derive_seed(seed, "baseline", 0))?;
        let n = samples.len();
        let trace_seed = seeds::derive_seed(seed, "baseline-trace", 0);
        let score = |w: &DMatrix<f64>, tau: &DVector<f64>| -> Result<f64> {
            let s = StudentNetwork::unsigned(w.clone(), DVector::zeros(m), act.clone())?.with_shifts(tau.clone());
            e_inf(&s, teacher, b.trace_n_eval, trace_seed)
        };
        let mut trace = vec![EpochRecord { epoch: 0, e_inf: score(&w, &tau)? }];
        let mut order: Vec<usize> = (0..n).collect();
        let (mut steps, mut epochs, mut stop) = (0usize, 0usize, StopReason::MaxSteps);
        'outer: while epochs < b.max_epochs {
            order.shuffle(&mut seeds::child_rng(seed, "baseline-epoch", epochs as u64));
            for chunk in order.chunks(b.batch) {
                if steps % 64 == 0 && start.elapsed() >= b.wall_clock_limit {
                    stop = StopReason::WallClock;
                    break 'outer;
                }
                sgd_step(&samples.x, &samples.y, chunk, &act, &mut w, &mut tau, b.lr);
                steps += 1;
            }
            epochs += 1;
            trace.push(EpochRecord { epoch: epochs, e_inf: score(&w, &tau)? });
        }
        let student = StudentNetwork::unsigned(w.clone(), DVector::zeros(m), act.clone())?.with_shifts(tau.clone());
        arts.with(STUDENT_FILE, |p| student.save(p))?;
        let mut csv = String::from("epoch,e_inf\n");
        for r in &trace {
            let _ = writeln!(csv, "{},{}", r.epoch, r.e_inf);
        }
        arts.write(TRACE_FILE, csv)?;
        Ok((student, trace, steps, epochs, stop))
    })?;
    let metrics = clock.run(arts, "score", || match_and_score(&student, teacher, cfg.n_eval, seed))?;
    let al = align_columns(teacher.weights(), &student.effective_weights());
    let shift_err = (0..m).map(|k| (teacher.shifts()[k] - student.shifts()[al.perm[k]]).powi(2)).sum::<f64>().sqrt();
    let mut warnings = Vec::new();
    if stop == StopReason::WallClock {
        warnings.push(format!("baseline hit the wall-clock limit after {epochs} epochs"));
    }
    let result = ExperimentResult {
        config: cfg.clone(),
        seed,
        d,
        m,
        n_h: 0,
        metrics,
        init: None,
        refine: Some(RefineSummary {
            steps,
            epochs,
            stop,
            gamma: b.lr,
            lambda_max: f64::NAN,
            initial_loss: f64::NAN,
            final_loss: f64::NAN,
            fitted_ratio: f64::NAN,
            audit_max_err: None,
            shift_err,
        }),
        spm: None,
        spectral_ratio: None,
        init_shift_bound: None,
        stage_times: clock.times,
        queries: clock.queries,
        oracle_calls: 0,
        total_time: start.elapsed(),
        query_ceiling: cfg.query_ceiling(),
        warnings,
    };
    Ok(BaselineResult { result: finish(result, arts)?, trace, student })
}

/// Gradient of the batch loss `(1/2B) Σ r_i²` in the weights and shifts.
fn batch_grad(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    idx: &[usize],
    act: &Activation<f64>,
    w: &DMatrix<f64>,
    tau: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let xb = x.select_rows(idx);
    let mut z = &xb * w;
    let bs = idx.len() as f64;
    for (r, &i) in idx.iter().enumerate() {
        let mut f = 0.0;
        for k in 0..z.ncols() {
            let (g, dg) = act.g_d1(z[(r, k)] + tau[k]);
            f += g;
            z[(r, k)] = dg;
        }
        let res = (f - y[i]) / bs;
        for k in 0..z.ncols() {
            z[(r, k)] *= res;
        }
    }
    let grad_tau = DVector::from_fn(z.ncols(), |k, _| z.column(k).sum());
    (xb.tr_mul(&z), grad_tau)
}

/// One step on the rows `idx`, then projection of each weight to the sphere.
fn sgd_step(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    idx: &[usize],
    act: &Activation<f64>,
    w: &mut DMatrix<f64>,
    tau: &mut DVector<f64>,
    lr: f64,
) {
    let (gw, gt) = batch_grad(x, y, idx, act, w, tau);
    *w -= gw * lr;
    tau.axpy(-lr, &gt, 1.0);
    for mut c in w.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c /= n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_gradient_matches_finite_differences() {
        let t = sample_teacher(4, 3, &crate::teacher::ShiftLaw::Uniform(-0.5, 0.5), Activation::tanh(), 2).unwrap();
        let s = draw_samples(&t, 10, 3).unwrap();
        let act = Activation::tanh();
        let mut rng = seeds::rng(1);
        let w0 = DMatrix::from_vec(4, 3, seeds::gaussian_vec(&mut rng, 12));
        let tau0 = DVector::from_vec(vec![0.1, -0.2, 0.05]);
        let idx = [0usize, 2, 3, 7, 9];
        let loss = |w: &DMatrix<f64>, tau: &DVector<f64>| -> f64 {
            let mut acc = 0.0;
            for &i in &idx {
                let mut f = 0.0;
                for k in 0..3 {
                    let dot: f64 = (0..4).map(|j| w[(j, k)] * s.x[(i, j)]).sum();
                    f += (dot + tau[k]).tanh();
                }
                acc += (f - s.y[i]).powi(2);
            }
            acc / (2.0 * idx.len() as f64)
        };
        let (gw, gt) = batch_grad(&s.x, &s.y, &idx, &act, &w0, &tau0);
        let h = 1e-6;
        for k in 0..3 {
            let (mut tp, mut tm) = (tau0.clone(), tau0.clone());
            tp[k] += h;
            tm[k] -= h;
            assert!(((loss(&w0, &tp) - loss(&w0, &tm)) / (2.0 * h) - gt[k]).abs() <= 1e-6);
            for i in 0..4 {
                let (mut wp, mut wm) = (w0.clone(), w0.clone());
                wp[(i, k)] += h;
                wm[(i, k)] -= h;
                assert!(((loss(&wp, &tau0) - loss(&wm, &tau0)) / (2.0 * h) - gw[(i, k)]).abs() <= 1e-6);
            }
        }
        let (mut w, mut tau) = (w0.clone(), tau0.clone());
        sgd_step(&s.x, &s.y, &idx, &act, &mut w, &mut tau, 0.1);
        assert!((&tau - (&tau0 - &gt * 0.1)).amax() <= 1e-15);
        for c in w.column_iter() {
            assert!((c.norm() - 1.0).abs() <= 1e-14);
        }
    }
}
