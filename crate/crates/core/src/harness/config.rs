//! Run configuration: a flat `key = value` text format with `[section]`
//! headers. Every key is globally unique, so the same name works as a
//! command-line flag.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::numdiff::FdConfig;
use crate::refine::{RefineConfig, StepSize};
use crate::spm::SpmConfig;
use crate::subspace::DerivativeMode;
use crate::teacher::ShiftLaw;

/// Key name, owning section and one-line help.
#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub key: &'static str,
    pub section: &'static str,
    pub help: &'static str,
}

const fn key(section: &'static str, key: &'static str, help: &'static str) -> KeySpec {
    KeySpec { key, section, help }
}

pub const KEYS: &[KeySpec] = &[
    key("run", "seed", "master seed"),
    key("run", "out-dir", "directory for artifacts"),
    key("teacher", "d", "input dimension D"),
    key("teacher", "m", "explicit neuron count (overrides beta)"),
    key("teacher", "beta", "neuron order: m = ceil(0.4 D^beta)"),
    key("teacher", "activation", "tanh or sigmoid"),
    key("teacher", "shift-law", "uniform(a,b), gaussian(sd) or fixed(t1;t2;...)"),
    key("subspace", "fd-step", "finite-difference step h"),
    key("subspace", "exact-derivatives", "use analytic derivatives instead of finite differences"),
    key("subspace", "n-h", "number of Hessian samples (default ceil(ln D * m))"),
    key("subspace", "dump-spectrum", "write the singular values of the Hessian matrix"),
    key("spm", "spm-gamma", "ascent step"),
    key("spm", "spm-steps", "iterations per restart"),
    key("spm", "spm-tol", "convergence tolerance"),
    key("spm", "spm-beta", "acceptance threshold on the objective"),
    key("spm", "spm-dedup", "cosine above which two maximizers coincide"),
    key("spm", "spm-restarts", "number of restarts (default ceil(5 m ln m))"),
    key("refine", "n-train", "training samples (default m D^2)"),
    key("refine", "lr", "step size, or `auto` for 0.9/lambda_max"),
    key("refine", "batch", "mini-batch size, 0 for full batch"),
    key("refine", "max-steps", "iteration budget"),
    key("refine", "stop-loss", "early-stop threshold on the training loss"),
    key("refine", "timeout-s", "wall-clock limit in seconds"),
    key("refine", "audit-every", "gradient audit period, 0 to disable"),
    key("eval", "n-eval", "held-out points for E_inf"),
    key("eval", "query-factor", "soft ceiling factor c in c D m^2 ln^2 m"),
    key("eval", "alpha-samples", "Monte-Carlo samples for the learnability estimate"),
    key("baseline", "baseline-n-train", "training samples (default 2.5 m D^2)"),
    key("baseline", "baseline-lr", "SGD step size"),
    key("baseline", "baseline-batch", "SGD mini-batch size"),
    key("baseline", "baseline-epochs", "epoch budget"),
    key("baseline", "baseline-timeout-s", "wall-clock limit in seconds"),
    key("baseline", "baseline-trace-n", "held-out points for the per-epoch E_inf trace"),
    key("study", "grid-d", "comma-separated input dimensions"),
    key("study", "grid-beta", "comma-separated neuron orders"),
    key("study", "reps", "repetitions per cell"),
    key("study", "workers", "concurrent runs"),
];

pub fn key_spec(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.key == name)
}

/// Neuron count: explicit or `⌈0.4 D^β⌉`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeuronCount {
    Explicit(usize),
    Order(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub n_train: Option<usize>,
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub wall_clock_limit: Duration,
    pub trace_n_eval: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            n_train: None,
            lr: 0.005,
            batch: 64,
            max_epochs: 1000,
            wall_clock_limit: Duration::from_secs(480),
            trace_n_eval: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub d: usize,
    pub neurons: NeuronCount,
    pub activation: ActivationKind,
    pub shift_law: ShiftLaw<f64>,
    pub fd_step: f64,
    pub exact_derivatives: bool,
    pub n_h: Option<usize>,
    pub dump_spectrum: bool,
    pub spm: SpmConfig<f64>,
    pub n_train: Option<usize>,
    pub lr: StepSize<f64>,
    pub batch: usize,
    pub max_steps: usize,
    pub stop_loss: f64,
    pub timeout: Duration,
    pub audit_every: usize,
    pub n_eval: usize,
    pub query_factor: f64,
    pub alpha_samples: usize,
    pub baseline: BaselineConfig,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let refine = RefineConfig::<f64>::default();
        PipelineConfig {
            d: 10,
            neurons: NeuronCount::Order(1.5),
            activation: ActivationKind::Tanh,
            shift_law: ShiftLaw::Uniform(-0.5, 0.5),
            fd_step: FdConfig::<f64>::default().step(),
            exact_derivatives: false,
            n_h: None,
            dump_spectrum: false,
            spm: SpmConfig::default(),
            n_train: None,
            lr: refine.gamma,
            batch: refine.batch,
            max_steps: 1_000_000,
            stop_loss: refine.stop_loss,
            timeout: refine.wall_clock_limit,
            audit_every: 0,
            n_eval: crate::diagnostics::DEFAULT_N_EVAL,
            query_factor: 10.0,
            alpha_samples: 2000,
            baseline: BaselineConfig::default(),
            seed: 0,
            out_dir: None,
        }
    }
}

/// `⌈0.4 D^β⌉`, guarded against round-off just above an integer.
pub fn neurons_for_order(d: usize, beta: f64) -> usize {
    let raw = 0.4 * (d as f64).powf(beta);
    (raw - 1e-9).ceil().max(1.0) as usize
}

/// `⌈ln D · m⌉`.
pub fn default_n_h(d: usize, m: usize) -> usize {
    ((d as f64).ln() * m as f64 - 1e-9).ceil().max(1.0) as usize
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value.trim().parse().map_err(|_| Error::Validation(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Validation(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

fn parse_opt<V: FromStr>(key: &str, value: &str) -> Result<Option<V>> {
    match value.trim() {
        "" | "auto" | "default" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn parse_secs(key: &str, value: &str) -> Result<Duration> {
    let s: f64 = parse(key, value)?;
    Duration::try_from_secs_f64(s).map_err(|_| Error::Validation(format!("invalid duration `{value}` for `{key}`")))
}

pub(crate) fn parse_list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>> {
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect()
}

fn opt_text<V: ToString>(v: &Option<V>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl PipelineConfig {
    pub fn m(&self) -> usize {
        match self.neurons {
            NeuronCount::Explicit(m) => m,
            NeuronCount::Order(beta) => neurons_for_order(self.d, beta),
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match self.neurons {
            NeuronCount::Order(b) => Some(b),
            NeuronCount::Explicit(_) => None,
        }
    }

    pub fn n_h(&self) -> usize {
        self.n_h.unwrap_or_else(|| default_n_h(self.d, self.m()))
    }

    pub fn derivative_mode(&self) -> Result<DerivativeMode<f64>> {
        if self.exact_derivatives {
            Ok(DerivativeMode::Exact)
        } else {
            Ok(DerivativeMode::FiniteDiff(FdConfig::new(self.fd_step)?))
        }
    }

    pub fn refine_config(&self) -> RefineConfig<f64> {
        RefineConfig {
            n_train: self.n_train.unwrap_or(self.m() * self.d * self.d),
            gamma: self.lr,
            batch: self.batch,
            max_steps: self.max_steps,
            stop_loss: self.stop_loss,
            wall_clock_limit: self.timeout,
            audit_every: (self.audit_every > 0).then_some(self.audit_every),
        }
    }

    pub fn baseline_n_train(&self) -> usize {
        self.baseline.n_train.unwrap_or_else(|| (2.5 * (self.m() * self.d * self.d) as f64).ceil() as usize)
    }

    /// Soft budget `c·D·m²·ln²m`.
    pub fn query_ceiling(&self) -> f64 {
        let m = self.m() as f64;
        self.query_factor * self.d as f64 * m * m * m.ln().powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Validation(format!("D must be at least 2, got {}", self.d)));
        }
        if let NeuronCount::Order(b) = self.neurons {
            if !b.is_finite() {
                return Err(Error::Validation(format!("invalid neuron order {b}")));
            }
        }
        if self.m() == 0 {
            return Err(Error::Validation("resolved m must be at least 1".into()));
        }
        if self.n_h() == 0 {
            return Err(Error::Validation("N_h must be positive".into()));
        }
        self.derivative_mode()?;
        self.spm.validate()?;
        self.refine_config().validate()?;
        if !(self.baseline.lr > 0.0) || self.baseline.batch == 0 {
            return Err(Error::Validation("baseline learning rate and batch must be positive".into()));
        }
        Ok(())
    }

    /// Assigns one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "out-dir" => self.out_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            "d" => self.d = parse(key, v)?,
            "m" => {
                if let Some(m) = parse_opt(key, v)? {
                    self.neurons = NeuronCount::Explicit(m);
                }
            }
            "beta" => self.neurons = NeuronCount::Order(parse(key, v)?),
            "activation" => self.activation = parse(key, v)?,
            "shift-law" => self.shift_law = v.parse()?,
            "fd-step" => self.fd_step = parse(key, v)?,
            "exact-derivatives" => self.exact_derivatives = parse_bool(key, v)?,
            "n-h" => self.n_h = parse_opt(key, v)?,
            "dump-spectrum" => self.dump_spectrum = parse_bool(key, v)?,
            "spm-gamma" => self.spm.gamma = parse(key, v)?,
            "spm-steps" => self.spm.max_steps = parse(key, v)?,
            "spm-tol" => self.spm.conv_tol = parse(key, v)?,
            "spm-beta" => self.spm.beta = parse(key, v)?,
            "spm-dedup" => self.spm.dedup_cos = parse(key, v)?,
            "spm-restarts" => self.spm.max_restarts = parse_opt(key, v)?,
            "n-train" => self.n_train = parse_opt(key, v)?,
            "lr" => {
                self.lr = match v {
                    "auto" => StepSize::Auto,
                    _ => StepSize::Fixed(parse(key, v)?),
                }
            }
            "batch" => self.batch = parse(key, v)?,
            "max-steps" => self.max_steps = parse(key, v)?,
            "stop-loss" => self.stop_loss = parse(key, v)?,
            "timeout-s" => self.timeout = parse_secs(key, v)?,
            "audit-every" => self.audit_every = parse(key, v)?,
            "n-eval" => self.n_eval = parse(key, v)?,
            "query-factor" => self.query_factor = parse(key, v)?,
            "alpha-samples" => self.alpha_samples = parse(key, v)?,
            "baseline-n-train" => self.baseline.n_train = parse_opt(key, v)?,
            "baseline-lr" => self.baseline.lr = parse(key, v)?,
            "baseline-batch" => self.baseline.batch = parse(key, v)?,
            "baseline-epochs" => self.baseline.max_epochs = parse(key, v)?,
            "baseline-timeout-s" => self.baseline.wall_clock_limit = parse_secs(key, v)?,
            "baseline-trace-n" => self.baseline.trace_n_eval = parse(key, v)?,
            _ => return Err(Error::Usage(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Current value of one key in the text format.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed.to_string(),
            "out-dir" => self.out_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "d" => self.d.to_string(),
            "m" => match self.neurons {
                NeuronCount::Explicit(m) => m.to_string(),
                NeuronCount::Order(_) => "auto".into(),
            },
            "beta" => match self.neurons {
                NeuronCount::Order(b) => b.to_string(),
                NeuronCount::Explicit(_) => return None,
            },
            "activation" => self.activation.to_string(),
            "shift-law" => self.shift_law.to_string(),
            "fd-step" => self.fd_step.to_string(),
            "exact-derivatives" => self.exact_derivatives.to_string(),
            "n-h" => opt_text(&self.n_h),
            "dump-spectrum" => self.dump_spectrum.to_string(),
            "spm-gamma" => self.spm.gamma.to_string(),
            "spm-steps" => self.spm.max_steps.to_string(),
            "spm-tol" => self.spm.conv_tol.to_string(),
            "spm-beta" => self.spm.beta.to_string(),
            "spm-dedup" => self.spm.dedup_cos.to_string(),
            "spm-restarts" => opt_text(&self.spm.max_restarts),
            "n-train" => opt_text(&self.n_train),
            "lr" => match self.lr {
                StepSize::Auto => "auto".into(),
                StepSize::Fixed(g) => g.to_string(),
            },
            "batch" => self.batch.to_string(),
            "max-steps" => self.max_steps.to_string(),
            "stop-loss" => self.stop_loss.to_string(),
            "timeout-s" => self.timeout.as_secs_f64().to_string(),
            "audit-every" => self.audit_every.to_string(),
            "n-eval" => self.n_eval.to_string(),
            "query-factor" => self.query_factor.to_string(),
            "alpha-samples" => self.alpha_samples.to_string(),
            "baseline-n-train" => opt_text(&self.baseline.n_train),
            "baseline-lr" => self.baseline.lr.to_string(),
            "baseline-batch" => self.baseline.batch.to_string(),
            "baseline-epochs" => self.baseline.max_epochs.to_string(),
            "baseline-timeout-s" => self.baseline.wall_clock_limit.as_secs_f64().to_string(),
            "baseline-trace-n" => self.baseline.trace_n_eval.to_string(),
            _ => return None,
        })
    }

    /// Sectioned text that [`parse_config`] reads back to an equal config.
    /// The output directory is omitted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for k in KEYS.iter().filter(|k| k.section != "study" && k.key != "out-dir") {
            let Some(v) = self.get(k.key) else { continue };
            if k.section != section {
                if !out.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{}]", k.section);
                section = k.section;
            }
            let _ = writeln!(out, "{} = {}", k.key, v);
        }
        out
    }
}

/// Grid of a scaling study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub grid_d: Vec<usize>,
    pub grid_beta: Vec<f64>,
    pub reps: usize,
    pub workers: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig { grid_d: Vec::new(), grid_beta: Vec::new(), reps: 1, workers: 1 }
    }
}

impl StudyConfig {
    /// Cartesian product of the grid over the base config, D outermost.
    pub fn expand(&self, base: &PipelineConfig) -> Vec<PipelineConfig> {
        let mut cells = Vec::new();
        for &d in &self.grid_d {
            for &beta in &self.grid_beta {
                cells.push(PipelineConfig { d, neurons: NeuronCount::Order(beta), ..base.clone() });
            }
        }
        cells
    }
}

/// Everything a command can be configured with.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub study: StudyConfig,
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "grid-d" => self.study.grid_d = parse_list(key, value)?,
            "grid-beta" => self.study.grid_beta = parse_list(key, value)?,
            "reps" => self.study.reps = parse(key, value)?,
            "workers" => self.study.workers = parse(key, value)?,
            _ => self.pipeline.set(key, value)?,
        }
        Ok(())
    }

    /// Applies a config text, then command-line overrides in order.
    pub fn from_sources(text: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut s = Settings::default();
        if let Some(text) = text {
            for (_, k, v) in parse_config(text)? {
                s.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            s.set(k, v)?;
        }
        Ok(s)
    }
}

/// Reads `[section]` headers and `key = value` lines; `#` starts a comment.
/// Returns `(line, key, value)` triples after checking that each key is known
/// and sits in its own section.
pub fn parse_config(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut section: Option<String> = None;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Parse { line, msg: format!("malformed section header `{content}`") })?;
            let name = name.trim().to_string();
            if !KEYS.iter().any(|k| k.section == name) {
                return Err(Error::Parse { line, msg: format!("unknown section `{name}`") });
            }
            section = Some(name);
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| Error::Parse { line, msg: format!("expected `key = value`, got `{content}`") })?;
        let k = k.trim();
        let spec = key_spec(k).ok_or_else(|| Error::Parse { line, msg: format!("unknown key `{k}`") })?;
        if let Some(s) = &section {
            if s != spec.section {
                return Err(Error::Parse { line, msg: format!("key `{k}` belongs in section [{}], not [{s}]", spec.section) });
            }
        }
        out.push((line, k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neuron_order_rule() {
        assert_eq!(neurons_for_order(20, 1.5), 36);
        assert_eq!(neurons_for_order(10, 1.0), 4);
        assert_eq!(neurons_for_order(10, 1.5), 13);
        assert_eq!(neurons_for_order(20, 2.0), 160);
        assert_eq!(neurons_for_order(2, 0.0), 1);
        assert_eq!(default_n_h(20, 36), 108);
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = PipelineConfig::default();
        for (k, v) in [("d", "17"), ("m", "9"), ("lr", "auto"), ("shift-law", "gaussian(0.05)"), ("spm-restarts", "40"), ("timeout-s", "2.5")] {
            cfg.set(k, v).unwrap();
        }
        let text = cfg.to_text();
        let back = Settings::from_sources(Some(&text), &[]).unwrap().pipeline;
        assert_eq!(back, cfg);
        let mut beta = PipelineConfig::default();
        beta.set("beta", "1.25").unwrap();
        let back = Settings::from_sources(Some(&beta.to_text()), &[]).unwrap().pipeline;
        assert_eq!(back, beta);
    }

    #[test]
    fn overrides_win_over_the_file() {
        let text = "[teacher]\nd = 12 # comment\nbeta = 1.0\n\n[refine]\nlr = 0.01\n";
        let s = Settings::from_sources(Some(text), &[("lr".into(), "0.5".into()), ("grid-d".into(), "10,20".into())]).unwrap();
        assert_eq!(s.pipeline.d, 12);
        assert_eq!(s.pipeline.m(), 5);
        assert_eq!(s.pipeline.lr, StepSize::Fixed(0.5));
        assert_eq!(s.study.grid_d, vec![10, 20]);
    }

    #[test]
    fn parse_errors_name_the_line() {
        assert!(matches!(parse_config("[teacher]\nlr = 1\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_config("bogus = 1"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_config("[nowhere]"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_config("d 3"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(Settings::from_sources(Some("d = x"), &[]), Err(Error::Validation(_))));
    }

    #[test]
    fn validation() {
        let mut cfg = PipelineConfig { d: 1, ..PipelineConfig::default() };
        assert!(cfg.validate().is_err());
        cfg.d = 5;
        assert!(cfg.validate().is_ok());
        cfg.lr = StepSize::Fixed(-1.0);
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig { neurons: NeuronCount::Explicit(0), ..PipelineConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn every_key_is_settable_and_readable() {
        let cfg = PipelineConfig::default();
        for k in KEYS.iter().filter(|k| k.section != "study") {
            let mut c = cfg.clone();
            if let Some(v) = cfg.get(k.key) {
                c.set(k.key, &v).unwrap();
                assert_eq!(c, cfg, "{}", k.key);
            }
        }
        let mut s = Settings::default();
        for (k, v) in [("grid-d", "10"), ("grid-beta", "1,1.5"), ("reps", "3"), ("workers", "2")] {
            s.set(k, v).unwrap();
        }
        assert_eq!(s.study.expand(&s.pipeline).len(), 2);
    }
}
