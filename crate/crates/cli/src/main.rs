use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Command};
use nalgebra::DVector;

use netident::diagnostics::{align_columns, check_incoherence, estimate_alpha, kernel_floor_omega, match_and_score};
use netident::harness::artifacts::*;
use netident::harness::{self, ExperimentResult, Settings, KEYS};
use netident::refine::refine;
use netident::shift_init::init_signs_shifts;
use netident::spm::collect_weights;
use netident::subspace::{build_hessian_matrix, top_m_projector, write_spectrum_csv, DerivativeMode};
use netident::teacher::sample_teacher;
use netident::{Activation, Error, Result, StudentNetwork, TeacherNetwork};

const BOOL_KEYS: &[&str] = &["exact-derivatives", "dump-spectrum"];
const DEFAULT_OUT: &str = "netident-out";
const RIP_TRIALS: usize = 200;
const OMEGA_GRID: usize = 61;

fn key_args() -> Vec<Arg> {
    let mut args = vec![Arg::new("config").long("config").value_name("FILE").help("key = value configuration file")];
    for k in KEYS {
        let mut a = Arg::new(k.key).long(k.key).help(k.help).help_heading(k.section);
        if BOOL_KEYS.contains(&k.key) {
            a = a.value_name("BOOL").num_args(0..=1).default_missing_value("true");
        } else {
            a = a.value_name("VALUE");
        }
        args.push(a);
    }
    args
}

fn file_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).value_name("FILE").required(true).help(help)
}

fn command() -> Command {
    let sub = |name: &'static str, about: &'static str| Command::new(name).about(about).args(key_args());
    Command::new("netident")
        .about("Identify the weights and shifts of a planted shallow network from point queries")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(sub("generate", "Sample a teacher network and write it to a file"))
        .subcommand(
            sub("recover-weights", "Recover the weight directions of a teacher from Hessian samples")
                .arg(file_arg("teacher", "teacher network file")),
        )
        .subcommand(
            sub("init-shifts", "Resolve signs and initial shifts for recovered weights")
                .arg(file_arg("teacher", "teacher network file"))
                .arg(file_arg("weights", "recovered weights file")),
        )
        .subcommand(
            sub("refine", "Refine the shifts of a student by gradient descent")
                .arg(file_arg("teacher", "teacher network file"))
                .arg(file_arg("student", "student network file")),
        )
        .subcommand(sub("pipeline", "Run every stage on a sampled teacher"))
        .subcommand(sub("baseline", "Train a student by joint SGD on weights and shifts"))
        .subcommand(
            sub("diagnose", "Report incoherence, kernel floor and learnability of a teacher")
                .arg(file_arg("teacher", "teacher network file"))
                .arg(Arg::new("student").long("student").value_name("FILE").help("student to score against the teacher")),
        )
        .subcommand(sub("study", "Run the pipeline over a grid of (D, beta) cells"))
}

fn settings(m: &ArgMatches) -> Result<Settings> {
    let text = match m.get_one::<String>("config") {
        Some(p) => Some(fs::read_to_string(p)?),
        None => None,
    };
    let mut overrides = Vec::new();
    for k in KEYS {
        if let Some(v) = m.get_one::<String>(k.key) {
            overrides.push((k.key.to_string(), v.clone()));
        }
    }
    Settings::from_sources(text.as_deref(), &overrides)
}

fn out_dir(s: &Settings) -> Result<PathBuf> {
    let dir = s.pipeline.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn path(m: &ArgMatches, name: &str) -> Result<PathBuf> {
    let p = PathBuf::from(m.get_one::<String>(name).expect("required argument"));
    if !p.is_file() {
        return Err(Error::Validation(format!("--{name}: no such file {}", p.display())));
    }
    Ok(p)
}

fn print_result(r: &ExperimentResult, dir: &Path) {
    let mt = &r.metrics;
    println!("D = {}, m = {}, seed = {}", r.d, r.m, r.seed);
    println!("E_inf = {:e}", mt.e_inf);
    println!("max_weight_err = {:e}", mt.max_weight_err);
    println!("shift_rms = {:e}", mt.shift_rms);
    println!("sign_accuracy = {}", mt.sign_accuracy);
    println!("delta_W1 = {:e}, delta_WO = {:e}, delta_WS = {:e}", mt.delta_w1, mt.delta_wo, mt.delta_ws);
    if let Some(s) = &r.spm {
        println!(
            "spm restarts = {}, accepted = {}, duplicates = {}, rejected = {}, degenerate = {}",
            s.restarts, s.accepted, s.duplicates, s.rejected, s.degenerate
        );
    }
    if let Some(x) = &r.refine {
        println!("refine steps = {}, epochs = {}, stop = {}, step size = {:e}", x.steps, x.epochs, x.stop.label(), x.gamma);
    }
    println!("queries = {} ({:.4} of the soft ceiling)", r.total_queries(), r.query_ratio());
    for (s, t) in &r.stage_times {
        println!("time {s} = {:.3}s", t.as_secs_f64());
    }
    println!("artifacts in {}", dir.display());
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
}

fn generate(s: &Settings) -> Result<()> {
    let c = &s.pipeline;
    c.validate()?;
    let dir = out_dir(s)?;
    let t = sample_teacher(c.d, c.m(), &c.shift_law, Activation::from_kind(c.activation)?, c.seed)?;
    t.save(dir.join(TEACHER_FILE))?;
    if t.clamped_shifts() > 0 {
        eprintln!("warning: {} shifts were clamped", t.clamped_shifts());
    }
    println!("wrote {}", dir.join(TEACHER_FILE).display());
    Ok(())
}

fn recover_weights(s: &Settings, teacher: &Path) -> Result<()> {
    let c = &s.pipeline;
    let t = TeacherNetwork::load(teacher)?;
    let dir = out_dir(s)?;
    let m = t.neurons();
    let n_h = c.n_h.unwrap_or_else(|| harness::config::default_n_h(t.dim(), m));
    let samples = build_hessian_matrix(&t, n_h, c.derivative_mode()?, c.seed)?;
    for w in &samples.warnings {
        eprintln!("warning: {w}");
    }
    let p = top_m_projector(&samples.columns, m)?;
    if c.dump_spectrum {
        write_spectrum_csv(dir.join(SPECTRUM_FILE), p.singular_values())?;
    }
    let out = match collect_weights(&p, m, &c.spm, c.seed) {
        Ok(o) => o,
        Err(e) => {
            if let Error::IncompleteRecovery { partial, .. } = &e {
                if !partial.is_empty() {
                    let w = nalgebra::DMatrix::from_fn(t.dim(), partial.len(), |i, k| partial[k][i]);
                    save_weights(dir.join(PARTIAL_WEIGHTS_FILE), &w)?;
                }
            }
            return Err(e);
        }
    };
    save_weights(dir.join(WEIGHTS_FILE), &out.weights)?;
    fs::write(dir.join(SPM_LOG_FILE), spm_log_csv(&out.log))?;
    println!("hessian queries = {}", samples.queries);
    println!(
        "restarts = {}, accepted = {}, duplicates = {}, rejected = {}, degenerate = {}",
        out.stats.restarts, out.stats.accepted, out.stats.duplicates, out.stats.rejected, out.stats.degenerate
    );
    let al = align_columns(t.weights(), &out.weights);
    let errs = netident::diagnostics::weight_errors(t.weights(), &netident::diagnostics::apply_alignment(&out.weights, &al));
    println!("max_weight_err = {:e}", errs.max_err);
    println!("wrote {}", dir.join(WEIGHTS_FILE).display());
    Ok(())
}

fn init_shifts(s: &Settings, teacher: &Path, weights: &Path) -> Result<()> {
    let c = &s.pipeline;
    let t = TeacherNetwork::load(teacher)?;
    let w = load_weights(weights)?;
    let dir = out_dir(s)?;
    let act = t.activation().clone();
    let init = init_signs_shifts(&t, &w, &act, c.derivative_mode()?)?;
    save_init(dir.join(INIT_FILE), &init)?;
    let student = harness::student_from_init(&w, &init, &act)?;
    student.save(dir.join(STUDENT_INIT_FILE))?;
    println!("cond(G2) = {:e}, cond(G3) = {:e}", init.cond_g2, init.cond_g3);
    println!("queries = {}", init.queries);
    if !init.undetermined.is_empty() {
        eprintln!("warning: undetermined signs set to +1 for neurons {:?}", init.undetermined);
    }
    if !init.clamped.is_empty() {
        eprintln!("warning: clamped initial shifts for neurons {:?}", init.clamped);
    }
    println!("wrote {}", dir.join(STUDENT_INIT_FILE).display());
    Ok(())
}

fn truth_in_student_order(t: &TeacherNetwork, student: &StudentNetwork) -> DVector<f64> {
    let al = align_columns(t.weights(), &student.effective_weights());
    let mut truth = DVector::zeros(t.neurons());
    for k in 0..t.neurons() {
        truth[al.perm[k]] = t.shifts()[k];
    }
    truth
}

fn refine_cmd(s: &Settings, teacher: &Path, student: &Path) -> Result<()> {
    let t = TeacherNetwork::load(teacher)?;
    let st = StudentNetwork::load(student)?;
    let dir = out_dir(s)?;
    let cfg = harness::PipelineConfig {
        d: t.dim(),
        neurons: harness::NeuronCount::Explicit(t.neurons()),
        ..s.pipeline.clone()
    }
    .refine_config();
    let truth = truth_in_student_order(&t, &st);
    let out = refine(&st, &t, &cfg, s.pipeline.seed, Some(&truth))?;
    out.student.save(dir.join(STUDENT_FILE))?;
    fs::write(dir.join(TRAJECTORY_FILE), trajectory_csv(&out.trajectory))?;
    println!("steps = {}, epochs = {}, stop = {}", out.steps, out.epochs, out.stop.label());
    println!("step size = {:e}, lambda_max = {:e}", out.gamma, out.lambda_max);
    println!("loss {:e} -> {:e}", out.initial_loss, out.final_loss);
    if out.fitted_ratio.is_finite() {
        println!("fitted per-step ratio = {}", out.fitted_ratio);
    }
    if let Some(e) = out.audit_max_err {
        println!("gradient audit max error = {e:e}");
    }
    println!("wrote {}", dir.join(STUDENT_FILE).display());
    Ok(())
}

fn diagnose(s: &Settings, teacher: &Path, student: Option<&Path>) -> Result<()> {
    let c = &s.pipeline;
    let t = TeacherNetwork::load(teacher)?;
    let rep = check_incoherence(t.weights(), 0.5, RIP_TRIALS, c.seed);
    println!("max squared correlation = {:e}", rep.max_sq_corr);
    println!("c2 estimate = {}", rep.c2_hat);
    for (i, n) in netident::diagnostics::incoherence::GRAM_ORDERS.iter().enumerate() {
        println!(
            "G{n}: norm = {}, Gershgorin bound = {}, inverse norm = {}",
            rep.gram_norms[i], rep.gershgorin_bounds[i], rep.gram_inv_norms[i]
        );
    }
    println!("sampled RIP constant (subsets of {}) = {}", rep.rip_p, rep.rip_delta_hat);
    let omega = kernel_floor_omega(t.activation(), OMEGA_GRID);
    println!("omega = {:e} at tau = {}, neglected tail <= {:e}", omega.omega, omega.tau_min, omega.tail_bound);
    let alpha = estimate_alpha(&t, c.alpha_samples, DerivativeMode::Exact, c.seed)?;
    println!("alpha = {alpha:e}");
    if let Some(p) = student {
        let st = StudentNetwork::load(p)?;
        let mt = match_and_score(&st, &t, c.n_eval, c.seed)?;
        println!("E_inf = {:e}", mt.e_inf);
        println!("max_weight_err = {:e}", mt.max_weight_err);
        println!("shift_rms = {:e}", mt.shift_rms);
        println!("sign_accuracy = {}", mt.sign_accuracy);
        println!("delta_W1 = {:e}, delta_WO = {:e}, delta_WS = {:e}", mt.delta_w1, mt.delta_wo, mt.delta_ws);
    }
    Ok(())
}

fn with_out_dir(s: &Settings) -> Result<harness::PipelineConfig> {
    Ok(harness::PipelineConfig { out_dir: Some(out_dir(s)?), ..s.pipeline.clone() })
}

fn run(matches: &ArgMatches) -> Result<()> {
    let (name, m) = matches.subcommand().expect("subcommand required");
    let s = settings(m)?;
    match name {
        "generate" => generate(&s),
        "recover-weights" => recover_weights(&s, &path(m, "teacher")?),
        "init-shifts" => init_shifts(&s, &path(m, "teacher")?, &path(m, "weights")?),
        "refine" => refine_cmd(&s, &path(m, "teacher")?, &path(m, "student")?),
        "pipeline" => {
            let cfg = with_out_dir(&s)?;
            let r = harness::run_pipeline(&cfg)?;
            print_result(&r, cfg.out_dir.as_deref().unwrap());
            Ok(())
        }
        "baseline" => {
            let cfg = with_out_dir(&s)?;
            let r = harness::run_baseline_sgd(&cfg)?;
            print_result(&r.result, cfg.out_dir.as_deref().unwrap());
            Ok(())
        }
        "diagnose" => {
            let student = if m.get_one::<String>("student").is_some() { Some(path(m, "student")?) } else { None };
            diagnose(&s, &path(m, "teacher")?, student.as_deref())
        }
        "study" => {
            let dir = out_dir(&s)?;
            let grid = s.study.expand(&s.pipeline);
            let rows = harness::run_scaling_study(&grid, s.study.reps, s.study.workers, Some(&dir))?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            println!("{} runs, {failed} failed; wrote {}", rows.len(), dir.join(harness::study::STUDY_FILE).display());
            Ok(())
        }
        other => Err(Error::Usage(format!("unknown command `{other}`"))),
    }
}

fn main() -> ExitCode {
    let matches = command().get_matches();
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_is_well_formed() {
        command().debug_assert();
    }

    #[test]
    fn boolean_flags_take_an_optional_value() {
        let m = command().get_matches_from(["netident", "pipeline", "--exact-derivatives", "--d", "7"]);
        let s = settings(m.subcommand_matches("pipeline").unwrap()).unwrap();
        assert!(s.pipeline.exact_derivatives);
        assert_eq!(s.pipeline.d, 7);
        let m = command().get_matches_from(["netident", "pipeline", "--dump-spectrum", "false"]);
        assert!(!settings(m.subcommand_matches("pipeline").unwrap()).unwrap().pipeline.dump_spectrum);
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        fs::write(&cfg, "[refine]\nlr = 0.01\nbatch = 32\n").unwrap();
        let m = command().get_matches_from(["netident", "refine", "--teacher", "t", "--student", "s", "--config", cfg.to_str().unwrap(), "--lr", "auto"]);
        let s = settings(m.subcommand_matches("refine").unwrap()).unwrap();
        assert_eq!(s.pipeline.lr, netident::refine::StepSize::Auto);
        assert_eq!(s.pipeline.batch, 32);
    }
}
