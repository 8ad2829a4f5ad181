//! Repeated pipeline runs over a grid of `(D, β)` cells.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::config::PipelineConfig;
use super::pipeline::{run_pipeline, ExperimentResult, STAGES};
use crate::error::{Error, Result};
use crate::seeds;

pub const STUDY_FILE: &str = "study.csv";

/// One grid cell repetition.
#[derive(Debug, Clone)]
pub struct StudyRow {
    pub cell: usize,
    pub rep: usize,
    pub config: PipelineConfig,
    pub outcome: std::result::Result<ExperimentResult, String>,
}

pub fn study_columns() -> Vec<String> {
    let mut cols: Vec<String> = [
        "cell", "rep", "D", "beta", "m", "seed", "E_inf", "max_weight_err", "shift_rms", "delta_W1", "delta_WO",
        "delta_WS", "init_shift_bound",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend(STAGES.iter().map(|s| format!("t_{s}")));
    cols.extend(STAGES.iter().map(|s| format!("q_{s}")));
    cols.extend(["q_total", "error"].iter().map(|s| s.to_string()));
    cols
}

fn row_fields(row: &StudyRow) -> Vec<String> {
    let c = &row.config;
    let mut f = vec![
        row.cell.to_string(),
        row.rep.to_string(),
        c.d.to_string(),
        c.beta().map(|b| b.to_string()).unwrap_or_default(),
        c.m().to_string(),
        c.seed.to_string(),
    ];
    match &row.outcome {
        Ok(r) => {
            let mt = &r.metrics;
            for v in [mt.e_inf, mt.max_weight_err, mt.shift_rms, mt.delta_w1, mt.delta_wo, mt.delta_ws] {
                f.push(v.to_string());
            }
            f.push(r.init_shift_bound.map(|v| v.to_string()).unwrap_or_default());
            f.extend(STAGES.iter().map(|s| r.stage_time(s).as_secs_f64().to_string()));
            f.extend(STAGES.iter().map(|s| r.stage_queries(s).to_string()));
            f.push(r.total_queries().to_string());
            f.push(String::new());
        }
        Err(e) => {
            let blanks = 7 + 2 * STAGES.len() + 1;
            f.extend(std::iter::repeat_n(String::new(), blanks));
            f.push(e.replace([',', '\n', '"'], " "));
        }
    }
    f
}

pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut out = study_columns().join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&row_fields(r).join(","));
        out.push('\n');
    }
    out
}

/// Runs every cell `reps` times. Repetition `r` of every cell uses the seed
/// derived from the cell's master seed and `r`. Failed runs become rows with
/// an error tag.
pub fn run_scaling_study(grid: &[PipelineConfig], reps: usize, workers: usize, out_dir: Option<&Path>) -> Result<Vec<StudyRow>> {
    if grid.is_empty() {
        return Err(Error::Usage("the study grid is empty".into()));
    }
    if reps == 0 {
        return Err(Error::Usage("the study needs at least one repetition".into()));
    }
    let jobs: Vec<StudyRow> = grid
        .iter()
        .enumerate()
        .flat_map(|(c, cfg)| {
            (0..reps).map(move |r| {
                let mut config = cfg.clone();
                config.seed = seeds::derive_seed(cfg.seed, "study-rep", r as u64);
                config.out_dir = out_dir.map(|o| o.join(format!("cell{c}")).join(format!("rep{r}")));
                StudyRow { cell: c, rep: r, config, outcome: Err(String::new()) }
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<StudyRow> = pool.install(|| {
        jobs.into_par_iter()
            .map(|mut job| {
                job.outcome = run_pipeline(&job.config).map_err(|e| e.to_string());
                job
            })
            .collect()
    });
    if let Some(o) = out_dir {
        fs::create_dir_all(o)?;
        fs::write(o.join(STUDY_FILE), study_csv(&rows))?;
    }
    Ok(rows)
}
