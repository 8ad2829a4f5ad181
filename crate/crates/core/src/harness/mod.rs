//! Orchestration: configuration, the end-to-end pipeline, the SGD baseline
//! and scaling studies.

pub mod artifacts;
pub mod baseline;
pub mod config;
pub mod pipeline;
pub mod study;

pub use baseline::{run_baseline_on, run_baseline_sgd, BaselineResult, EpochRecord};
pub use config::{parse_config, BaselineConfig, NeuronCount, PipelineConfig, Settings, StudyConfig, KEYS};
pub use pipeline::{result_csv, run_pipeline, run_pipeline_on, student_from_init, ExperimentResult, InitSummary, RefineSummary};
pub use study::{run_scaling_study, study_csv, StudyRow};
