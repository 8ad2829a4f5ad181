//! Text artifacts passed between stages.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::refine::TrajectoryPoint;
use crate::shift_init::InitResult;
use crate::spm::RestartRecord;
use crate::teacher::{content_lines, parse_field};

fn field<V: std::str::FromStr>(tok: &str, line: usize) -> Result<V> {
    parse_field(tok, line, "value")
}

pub const TEACHER_FILE: &str = "teacher.txt";
pub const WEIGHTS_FILE: &str = "weights.txt";
pub const PARTIAL_WEIGHTS_FILE: &str = "weights_partial.txt";
pub const SPECTRUM_FILE: &str = "spectrum.csv";
pub const SPM_LOG_FILE: &str = "spm_log.csv";
pub const INIT_FILE: &str = "init.txt";
pub const STUDENT_INIT_FILE: &str = "student_init.txt";
pub const STUDENT_FILE: &str = "student.txt";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const RESULT_FILE: &str = "result.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const CONFIG_FILE: &str = "config.txt";
pub const ERROR_FILE: &str = "error.txt";

/// Header `D m`, then `D` rows of `m` values; column `k` is `ŵ_k`.
pub fn weights_to_text(w: &DMatrix<f64>) -> String {
    let mut out = format!("# recovered weights: D m, then one row per coordinate\n{} {}\n", w.nrows(), w.ncols());
    for i in 0..w.nrows() {
        let row: Vec<String> = w.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn weights_from_text(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "missing header".into() })?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::Parse { line: hl, msg: "header must be `D m`".into() });
    }
    let d: usize = field(dims[0], hl)?;
    let m: usize = field(dims[1], hl)?;
    let mut w = DMatrix::zeros(d, m);
    for i in 0..d {
        let (ln, row) = lines.next().ok_or(Error::Parse { line: hl + i + 1, msg: format!("expected {d} rows") })?;
        let vals: Vec<f64> = row.split_whitespace().map(|t| field(t, ln)).collect::<Result<_>>()?;
        if vals.len() != m {
            return Err(Error::Parse { line: ln, msg: format!("expected {m} values, got {}", vals.len()) });
        }
        for (k, v) in vals.into_iter().enumerate() {
            w[(i, k)] = v;
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(Error::Parse { line: ln, msg: "trailing content".into() });
    }
    Ok(w)
}

pub fn save_weights(path: impl AsRef<Path>, w: &DMatrix<f64>) -> Result<()> {
    Ok(fs::write(path, weights_to_text(w))?)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    weights_from_text(&fs::read_to_string(path)?)
}

/// Summary lines followed by one `k sign tau0 c2 c3` row per neuron.
pub fn init_to_text(r: &InitResult<f64>) -> String {
    let list = |v: &[usize]| v.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",");
    let mut out = String::new();
    let _ = writeln!(out, "cond_g2 = {}", r.cond_g2);
    let _ = writeln!(out, "cond_g3 = {}", r.cond_g3);
    let _ = writeln!(out, "sign_fallback = {}", r.sign_fallback);
    let _ = writeln!(out, "undetermined = {}", list(&r.undetermined));
    let _ = writeln!(out, "clamped = {}", list(&r.clamped));
    let _ = writeln!(out, "queries = {}", r.queries);
    let _ = writeln!(out, "k sign tau0 c2 c3");
    for k in 0..r.signs.len() {
        let _ = writeln!(out, "{k} {} {} {} {}", r.signs[k], r.tau0[k], r.c2[k], r.c3[k]);
    }
    out
}

pub fn init_from_text(text: &str) -> Result<InitResult<f64>> {
    let mut r = InitResult {
        signs: Vec::new(),
        tau0: DVector::zeros(0),
        c2: DVector::zeros(0),
        c3: DVector::zeros(0),
        cond_g2: f64::NAN,
        cond_g3: f64::NAN,
        undetermined: Vec::new(),
        clamped: Vec::new(),
        sign_fallback: false,
        queries: 0,
    };
    let (mut tau0, mut c2, mut c3) = (Vec::new(), Vec::new(), Vec::new());
    let list = |v: &str, line: usize| -> Result<Vec<usize>> {
        v.split(',').filter(|s| !s.trim().is_empty()).map(|s| field(s.trim(), line)).collect()
    };
    let mut in_table = false;
    for (line, content) in content_lines(text) {
        if in_table {
            let f: Vec<&str> = content.split_whitespace().collect();
            if f.len() != 5 {
                return Err(Error::Parse { line, msg: "expected `k sign tau0 c2 c3`".into() });
            }
            let k: usize = field(f[0], line)?;
            if k != r.signs.len() {
                return Err(Error::Parse { line, msg: format!("expected neuron {}", r.signs.len()) });
            }
            r.signs.push(field(f[1], line)?);
            tau0.push(field(f[2], line)?);
            c2.push(field(f[3], line)?);
            c3.push(field(f[4], line)?);
            continue;
        }
        if content.split_whitespace().collect::<Vec<_>>() == ["k", "sign", "tau0", "c2", "c3"] {
            in_table = true;
            continue;
        }
        let (k, v) = content.split_once('=').ok_or(Error::Parse { line, msg: "expected `key = value`".into() })?;
        let v = v.trim();
        match k.trim() {
            "cond_g2" => r.cond_g2 = field(v, line)?,
            "cond_g3" => r.cond_g3 = field(v, line)?,
            "sign_fallback" => r.sign_fallback = field(v, line)?,
            "undetermined" => r.undetermined = list(v, line)?,
            "clamped" => r.clamped = list(v, line)?,
            "queries" => r.queries = field(v, line)?,
            other => return Err(Error::Parse { line, msg: format!("unknown field `{other}`") }),
        }
    }
    if r.signs.is_empty() {
        return Err(Error::Parse { line: 0, msg: "no neurons".into() });
    }
    r.tau0 = DVector::from_vec(tau0);
    r.c2 = DVector::from_vec(c2);
    r.c3 = DVector::from_vec(c3);
    Ok(r)
}

pub fn save_init(path: impl AsRef<Path>, r: &InitResult<f64>) -> Result<()> {
    Ok(fs::write(path, init_to_text(r))?)
}

pub fn load_init(path: impl AsRef<Path>) -> Result<InitResult<f64>> {
    init_from_text(&fs::read_to_string(path)?)
}

/// `step,loss,shift_err`; the last column is empty without ground truth.
pub fn trajectory_csv(points: &[TrajectoryPoint]) -> String {
    let mut out = String::from("step,loss,shift_err\n");
    for p in points {
        let err = p.shift_err.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", p.step, p.loss, err);
    }
    out
}

pub fn spm_log_csv(log: &[RestartRecord]) -> String {
    let mut out = String::from("restart,steps,objective,outcome\n");
    for r in log {
        let _ = writeln!(out, "{},{},{},{}", r.index, r.steps, r.objective, r.outcome.label());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_round_trip() {
        let w = DMatrix::from_fn(3, 4, |i, k| (i as f64 + 1.0) / (k as f64 + 3.0) - 0.1);
        assert_eq!(weights_from_text(&weights_to_text(&w)).unwrap(), w);
        assert!(matches!(weights_from_text("2 2\n1 2\n3\n"), Err(Error::Parse { line: 3, .. })));
        assert!(weights_from_text("2 2\n1 2\n").is_err());
    }

    #[test]
    fn init_round_trip() {
        let r = InitResult {
            signs: vec![1, -1, 1],
            tau0: DVector::from_vec(vec![0.1, -0.25, 1.0 / 3.0]),
            c2: DVector::from_vec(vec![0.2, 0.3, -0.4]),
            c3: DVector::from_vec(vec![-1.0, 2.0, 0.0]),
            cond_g2: 1.5,
            cond_g3: 1.25,
            undetermined: vec![2],
            clamped: vec![0, 2],
            sign_fallback: true,
            queries: 42,
        };
        assert_eq!(init_from_text(&init_to_text(&r)).unwrap(), r);
    }
}
