//! End-to-end identification run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::DVector;

use super::artifacts::*;
use super::config::PipelineConfig;
use crate::activation::Activation;
use crate::diagnostics::{align_columns, init_shift_bound, match_and_score, Metrics};
use crate::error::{AcceptanceStats, Error, Result};
use crate::refine::{refine, RefineOutcome, StopReason};
use crate::shift_init::{init_signs_shifts, InitResult};
use crate::spm::collect_weights;
use crate::subspace::{build_hessian_matrix, top_m_projector, write_spectrum_csv};
use crate::teacher::{sample_teacher, StudentNetwork, TeacherNetwork};

pub const STAGES: [&str; 7] = ["teacher", "hessian", "subspace", "spm", "init", "refine", "score"];

#[derive(Debug, Clone, PartialEq)]
pub struct InitSummary {
    pub cond_g2: f64,
    pub cond_g3: f64,
    pub flipped: usize,
    pub undetermined: usize,
    pub clamped: usize,
    pub sign_fallback: bool,
    /// `‖τ̂⁽⁰⁾ − τ‖₂` after alignment.
    pub shift_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineSummary {
    pub steps: usize,
    pub epochs: usize,
    pub stop: StopReason,
    pub gamma: f64,
    pub lambda_max: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub fitted_ratio: f64,
    pub audit_max_err: Option<f64>,
    /// `‖τ̂ − τ‖₂` after alignment.
    pub shift_err: f64,
}

impl RefineSummary {
    fn from_outcome<T: crate::Real>(o: &RefineOutcome<T>, shift_err: f64) -> Self {
        RefineSummary {
            steps: o.steps,
            epochs: o.epochs,
            stop: o.stop,
            gamma: o.gamma.as_f64(),
            lambda_max: o.lambda_max.as_f64(),
            initial_loss: o.initial_loss.as_f64(),
            final_loss: o.final_loss.as_f64(),
            fitted_ratio: o.fitted_ratio,
            audit_max_err: o.audit_max_err,
            shift_err,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: PipelineConfig,
    pub seed: u64,
    pub d: usize,
    pub m: usize,
    pub n_h: usize,
    pub metrics: Metrics,
    pub init: Option<InitSummary>,
    pub refine: Option<RefineSummary>,
    pub spm: Option<AcceptanceStats>,
    /// `σ_m / σ_1` of the Hessian matrix.
    pub spectral_ratio: Option<f64>,
    pub init_shift_bound: Option<f64>,
    pub stage_times: Vec<(&'static str, Duration)>,
    /// Counted network evaluations per stage.
    pub queries: Vec<(&'static str, u64)>,
    /// Analytic derivative evaluations (exact mode only).
    pub oracle_calls: u64,
    pub total_time: Duration,
    pub query_ceiling: f64,
    pub warnings: Vec<String>,
}

impl ExperimentResult {
    pub fn total_queries(&self) -> u64 {
        self.queries.iter().map(|(_, q)| q).sum()
    }

    pub fn query_ratio(&self) -> f64 {
        self.total_queries() as f64 / self.query_ceiling
    }

    pub fn stage_time(&self, stage: &str) -> Duration {
        self.stage_times.iter().filter(|(s, _)| *s == stage).map(|(_, t)| *t).sum()
    }

    pub fn stage_queries(&self, stage: &str) -> u64 {
        self.queries.iter().filter(|(s, _)| *s == stage).map(|(_, q)| *q).sum()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const RESULT_COLUMNS: &[&str] = &[
    "D", "beta", "m", "seed", "n_h", "E_inf", "max_weight_err", "shift_rms", "sign_accuracy", "delta_W1",
    "delta_WO", "delta_WS", "init_shift_bound", "init_shift_err", "refined_shift_err", "spectral_ratio",
    "restarts", "accepted", "duplicates", "rejected", "degenerate", "q_hessian", "q_init", "q_refine",
    "q_total", "query_ratio", "refine_steps", "refine_stop", "gamma", "lambda_max", "fitted_ratio",
];

/// Header and one row, free of wall-clock quantities.
pub fn result_csv(r: &ExperimentResult) -> String {
    let mut out = RESULT_COLUMNS.join(",");
    out.push('\n');
    out.push_str(&result_row(r).join(","));
    out.push('\n');
    out
}

pub(crate) fn result_row(r: &ExperimentResult) -> Vec<String> {
    let s = r.spm.clone();
    let stat = |f: fn(&AcceptanceStats) -> usize| s.as_ref().map(|s| f(s).to_string()).unwrap_or_default();
    let mt = &r.metrics;
    vec![
        r.d.to_string(),
        opt(r.config.beta()),
        r.m.to_string(),
        r.seed.to_string(),
        r.n_h.to_string(),
        mt.e_inf.to_string(),
        mt.max_weight_err.to_string(),
        mt.shift_rms.to_string(),
        mt.sign_accuracy.to_string(),
        mt.delta_w1.to_string(),
        mt.delta_wo.to_string(),
        mt.delta_ws.to_string(),
        opt(r.init_shift_bound),
        opt(r.init.as_ref().map(|i| i.shift_err)),
        opt(r.refine.as_ref().map(|i| i.shift_err)),
        opt(r.spectral_ratio),
        stat(|s| s.restarts),
        stat(|s| s.accepted),
        stat(|s| s.duplicates),
        stat(|s| s.rejected),
        stat(|s| s.degenerate),
        r.stage_queries("hessian").to_string(),
        r.stage_queries("init").to_string(),
        r.stage_queries("refine").to_string(),
        r.total_queries().to_string(),
        r.query_ratio().to_string(),
        r.refine.as_ref().map(|x| x.steps.to_string()).unwrap_or_default(),
        r.refine.as_ref().map(|x| x.stop.label().to_string()).unwrap_or_default(),
        opt(r.refine.as_ref().map(|x| x.gamma)),
        opt(r.refine.as_ref().map(|x| x.lambda_max)),
        opt(r.refine.as_ref().map(|x| x.fitted_ratio)),
    ]
}

pub fn timings_csv(r: &ExperimentResult) -> String {
    let mut out = String::from("stage,seconds\n");
    for (s, t) in &r.stage_times {
        let _ = writeln!(out, "{s},{}", t.as_secs_f64());
    }
    let _ = writeln!(out, "total,{}", r.total_time.as_secs_f64());
    out
}

/// Output directory bookkeeping; a no-op without a directory.
pub(crate) struct Artifacts {
    dir: Option<PathBuf>,
}

impl Artifacts {
    pub(crate) fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d)?;
        }
        Ok(Artifacts { dir: dir.map(Path::to_path_buf) })
    }

    pub(crate) fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    pub(crate) fn write(&self, name: &str, content: impl AsRef<[u8]>) -> Result<()> {
        if let Some(p) = self.path(name) {
            fs::write(p, content)?;
        }
        Ok(())
    }

    pub(crate) fn with(&self, name: &str, f: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        match self.path(name) {
            Some(p) => f(&p),
            None => Ok(()),
        }
    }

    /// Records a stage failure and wraps the error with the stage name.
    pub(crate) fn fail(&self, stage: &'static str, e: Error) -> Error {
        if let Error::IncompleteRecovery { partial, .. } = &e {
            if !partial.is_empty() {
                let d = partial[0].len();
                let w = nalgebra::DMatrix::from_fn(d, partial.len(), |i, k| partial[k][i]);
                let _ = self.with(PARTIAL_WEIGHTS_FILE, |p| save_weights(p, &w));
            }
        }
        let _ = self.write(ERROR_FILE, format!("stage = {stage}\nerror = {e}\n"));
        e.in_stage(stage)
    }
}

/// Runs `f` as stage `name`, recording its time and queries.
pub(crate) struct StageClock<'a> {
    teacher: Option<&'a TeacherNetwork<f64>>,
    pub(crate) times: Vec<(&'static str, Duration)>,
    pub(crate) queries: Vec<(&'static str, u64)>,
}

impl<'a> StageClock<'a> {
    pub(crate) fn new() -> Self {
        StageClock { teacher: None, times: Vec::new(), queries: Vec::new() }
    }

    pub(crate) fn attach(&mut self, t: &'a TeacherNetwork<f64>) {
        self.teacher = Some(t);
    }

    pub(crate) fn run<V>(
        &mut self,
        arts: &Artifacts,
        name: &'static str,
        f: impl FnOnce() -> Result<V>,
    ) -> Result<V> {
        let q0 = self.teacher.map_or(0, |t| t.query_count());
        let start = Instant::now();
        let out = f();
        self.times.push((name, start.elapsed()));
        self.queries.push((name, self.teacher.map_or(0, |t| t.query_count()) - q0));
        out.map_err(|e| arts.fail(name, e))
    }
}

/// Samples a teacher from the config and runs every stage on it.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let arts = Artifacts::new(cfg.out_dir.as_deref())?;
    arts.write(CONFIG_FILE, cfg.to_text())?;
    let mut clock = StageClock::new();
    let act = Activation::from_kind(cfg.activation)?;
    let teacher = clock.run(&arts, "teacher", || {
        let t = sample_teacher(cfg.d, cfg.m(), &cfg.shift_law, act.clone(), cfg.seed)?;
        arts.with(TEACHER_FILE, |p| t.save(p))?;
        Ok(t)
    })?;
    run_on_teacher(cfg, &teacher, clock, &arts)
}

/// Runs the identification stages against a given teacher.
pub fn run_pipeline_on(cfg: &PipelineConfig, teacher: &TeacherNetwork<f64>) -> Result<ExperimentResult> {
    let cfg = PipelineConfig {
        d: teacher.dim(),
        neurons: super::config::NeuronCount::Explicit(teacher.neurons()),
        activation: teacher.activation().kind(),
        ..cfg.clone()
    };
    cfg.validate()?;
    let arts = Artifacts::new(cfg.out_dir.as_deref())?;
    arts.write(CONFIG_FILE, cfg.to_text())?;
    arts.with(TEACHER_FILE, |p| teacher.save(p))?;
    run_on_teacher(&cfg, teacher, StageClock::new(), &arts)
}

fn run_on_teacher<'a>(
    cfg: &PipelineConfig,
    teacher: &'a TeacherNetwork<f64>,
    mut clock: StageClock<'a>,
    arts: &Artifacts,
) -> Result<ExperimentResult> {
    let start = Instant::now();
    clock.attach(teacher);
    let (d, m, n_h, seed) = (teacher.dim(), teacher.neurons(), cfg.n_h(), cfg.seed);
    let mode = cfg.derivative_mode()?;
    let act = teacher.activation().clone();
    let mut warnings = Vec::new();
    if teacher.clamped_shifts() > 0 {
        warnings.push(format!("{} planted shifts were clamped to the admissible interval", teacher.clamped_shifts()));
    }
    let oracle0 = teacher.oracle_calls();

    let samples = clock.run(arts, "hessian", || build_hessian_matrix(teacher, n_h, mode, seed))?;
    warnings.extend(samples.warnings.iter().cloned());
    let projector = clock.run(arts, "subspace", || {
        let p = top_m_projector(&samples.columns, m);
        if cfg.dump_spectrum {
            if let Ok(p) = &p {
                arts.with(SPECTRUM_FILE, |path| write_spectrum_csv(path, p.singular_values()))?;
            }
        }
        p
    })?;
    let sv = projector.singular_values();
    let spectral_ratio = (sv.len() >= m && sv[0] > 0.0).then(|| sv[m - 1] / sv[0]);
    drop(samples);

    let spm = clock.run(arts, "spm", || {
        let out = collect_weights(&projector, m, &cfg.spm, seed)?;
        arts.with(WEIGHTS_FILE, |p| save_weights(p, &out.weights))?;
        arts.write(SPM_LOG_FILE, spm_log_csv(&out.log))?;
        Ok(out)
    })?;

    let (init, student0) = clock.run(arts, "init", || {
        let init = init_signs_shifts(teacher, &spm.weights, &act, mode)?;
        arts.with(INIT_FILE, |p| save_init(p, &init))?;
        let student = student_from_init(&spm.weights, &init, &act)?;
        arts.with(STUDENT_INIT_FILE, |p| student.save(p))?;
        Ok((init, student))
    })?;
    if !init.undetermined.is_empty() {
        warnings.push(format!("{} signs were undetermined and set to +1", init.undetermined.len()));
    }
    if !init.clamped.is_empty() {
        warnings.push(format!("{} initial shifts were clamped", init.clamped.len()));
    }

    let al = align_columns(teacher.weights(), &student0.effective_weights());
    let mut truth_in_student = DVector::zeros(m);
    for k in 0..m {
        truth_in_student[al.perm[k]] = teacher.shifts()[k];
    }
    let init_err = (student0.shifts() - &truth_in_student).norm();

    let rcfg = cfg.refine_config();
    let refined = clock.run(arts, "refine", || {
        let out = refine(&student0, teacher, &rcfg, seed, Some(&truth_in_student))?;
        arts.with(STUDENT_FILE, |p| out.student.save(p))?;
        arts.write(TRAJECTORY_FILE, trajectory_csv(&out.trajectory))?;
        Ok(out)
    })?;
    let refined_err = (refined.student.shifts() - &truth_in_student).norm();
    if refined.stop == StopReason::WallClock {
        warnings.push(format!("refinement hit the wall-clock limit after {} steps", refined.steps));
    }

    let metrics = clock.run(arts, "score", || match_and_score(&refined.student, teacher, cfg.n_eval, seed))?;
    let eps = if cfg.exact_derivatives { 0.0 } else { cfg.fd_step * cfg.fd_step };

    let result = ExperimentResult {
        config: cfg.clone(),
        seed,
        d,
        m,
        n_h,
        init_shift_bound: Some(init_shift_bound(m, d, eps, metrics.max_weight_err)),
        metrics,
        init: Some(InitSummary {
            cond_g2: init.cond_g2,
            cond_g3: init.cond_g3,
            flipped: init.signs.iter().filter(|s| **s < 0).count(),
            undetermined: init.undetermined.len(),
            clamped: init.clamped.len(),
            sign_fallback: init.sign_fallback,
            shift_err: init_err,
        }),
        refine: Some(RefineSummary::from_outcome(&refined, refined_err)),
        spm: Some(spm.stats.clone()),
        spectral_ratio,
        stage_times: clock.times,
        queries: clock.queries,
        oracle_calls: teacher.oracle_calls() - oracle0,
        total_time: start.elapsed(),
        query_ceiling: cfg.query_ceiling(),
        warnings,
    };
    finish(result, arts)
}

pub(crate) fn finish(mut result: ExperimentResult, arts: &Artifacts) -> Result<ExperimentResult> {
    if result.query_ratio() > 1.0 {
        result.warnings.push(format!(
            "{} queries exceed the soft ceiling {:.0} (ratio {:.3})",
            result.total_queries(),
            result.query_ceiling,
            result.query_ratio()
        ));
    }
    arts.write(RESULT_FILE, result_csv(&result))?;
    arts.write(TIMINGS_FILE, timings_csv(&result))?;
    Ok(result)
}

/// `InitResult` with the signs folded into the weights.
pub fn student_from_init(
    weights: &nalgebra::DMatrix<f64>,
    init: &InitResult<f64>,
    act: &Activation<f64>,
) -> Result<StudentNetwork<f64>> {
    Ok(StudentNetwork::new(weights.clone(), init.signs.clone(), init.tau0.clone(), act.clone())?.fold_signs())
}
