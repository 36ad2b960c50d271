//! Pipeline stages behind the `forge` command.

pub mod config;
pub mod pipeline;
pub mod stages;

pub use config::{EvalSettings, LabelSettings, PipelineConfig, RunPaths};
pub use pipeline::{run_pipeline, PipelineSummary};
