//! The full chain from one config: corpus, traces, labels, graphs, model,
//! scores, evaluation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use forge_core::corpusgen::load_corpus;
use forge_core::graphs::MethodGraph;
use forge_model::{train, Model, ModelConfig, ModelError, TrainReport};
use serde::Serialize;

use crate::config::{PipelineConfig, RunPaths};
use crate::stages::{self, CorpusSummary, EvalReport, GraphSummary, LabelTotals, TestRunSummary};

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch-{epoch}.json"))
}

/// Trains and writes `epoch-<n>.json` after every epoch. On divergence the
/// last completed epoch is also written as `last-good.json`.
pub fn train_with_checkpoints(
    config: ModelConfig,
    graphs: &[MethodGraph],
    dir: &Path,
) -> Result<(Model, TrainReport)> {
    std::fs::create_dir_all(dir)?;
    let result = train(config, graphs, |m, _| m.save(&checkpoint_path(dir, m.epoch)));
    match result {
        Ok(r) => Ok(r),
        Err(ModelError::Divergence { epoch, step, last_good }) => {
            if let Some(m) = &last_good {
                m.save(&dir.join("last-good.json"))?;
            }
            bail!(
                "training diverged at epoch {epoch}, step {step}{}",
                if last_good.is_some() { "; last good checkpoint saved as last-good.json" } else { "" }
            )
        }
        Err(e) => Err(e.into()),
    }
}

/// Test projects as configured, or the last `holdout_projects` by name.
pub fn split_projects(cfg: &PipelineConfig, projects: &[String]) -> Result<(Vec<String>, Vec<String>)> {
    let test: Vec<String> = if cfg.evaluation.test_projects.is_empty() {
        let n = cfg.evaluation.holdout_projects;
        if n == 0 || n >= projects.len() {
            bail!("holdout_projects = {n} leaves no training or no test project among {}", projects.len());
        }
        projects[projects.len() - n..].to_vec()
    } else {
        cfg.evaluation.test_projects.clone()
    };
    for t in &test {
        if !projects.contains(t) {
            bail!("test project `{t}` has no labeled graphs");
        }
    }
    let train: Vec<String> = projects.iter().filter(|p| !test.contains(p)).cloned().collect();
    if train.is_empty() {
        bail!("every project is a test project; nothing to train on");
    }
    Ok((train, test))
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineSummary {
    pub config: PipelineConfig,
    pub paths: RunPaths,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<CorpusSummary>,
    pub tests: Vec<TestRunSummary>,
    pub labels: LabelTotals,
    pub graphs: GraphSummary,
    pub train_projects: Vec<String>,
    pub test_projects: Vec<String>,
    pub training: TrainReport,
    pub evaluation: EvalReport,
}

pub fn run_pipeline(cfg: &PipelineConfig, config_dir: &Path, work_dir: &Path) -> Result<PipelineSummary> {
    cfg.validate()?;
    let paths = RunPaths::resolve(cfg, config_dir, work_dir);
    std::fs::create_dir_all(work_dir)?;

    let corpus = match &cfg.generate {
        Some(g) => {
            let s = stages::gen_corpus(g, &paths.corpus)?;
            tracing::info!(projects = s.projects, methods = s.methods, "corpus generated");
            Some(s)
        }
        None => None,
    };
    let programs = load_corpus(&paths.corpus)?;
    if programs.is_empty() {
        bail!("no projects in {}", paths.corpus.display());
    }

    let pattern = glob::Pattern::new(&cfg.tests)?;
    let tests = stages::run_all_tests(&programs, &pattern, cfg.seed, &paths.traces, false)?;
    tracing::info!(projects = tests.len(), "traces written");

    let trace_dirs: Vec<(String, PathBuf)> =
        programs.iter().map(|p| (p.name.clone(), paths.traces.join(&p.name))).collect();
    let (labeled, labels) = stages::label_all(&trace_dirs, &cfg.labeler, cfg.seed)?;
    stages::write_labeled_file(&paths.labels, &labeled)?;

    let (graphs, graph_summary) = stages::build_graphs(&labeled, &programs)?;
    stages::write_graph_dir(&paths.graphs, &graphs)?;
    tracing::info!(graphs = graph_summary.graphs, too_large = graph_summary.too_large, "graphs written");

    let names: Vec<String> = graphs.keys().cloned().collect();
    let (train_projects, test_projects) = split_projects(cfg, &names)?;
    let train_graphs = stages::select_projects(&graphs, &train_projects, &[])?;
    let test_graphs = stages::select_projects(&graphs, &test_projects, &[])?;

    let mut model_cfg = cfg.model.clone();
    model_cfg.set_seed(cfg.seed);
    let (model, training) = train_with_checkpoints(model_cfg, &train_graphs, &paths.checkpoints)?;

    let scores = stages::rank(&model, &test_graphs)?;
    stages::write_scores(&paths.scores, &scores)?;

    let golden = paths.golden.as_deref().map(stages::read_golden).transpose()?;
    let scored = stages::join_scores(&scores, Some(&labeled), golden.as_deref())?;
    let (evaluation, curve) = stages::evaluate(&scored, &cfg.evaluation)?;
    stages::write_roc(&paths.roc, &curve)?;
    stages::write_json(&paths.eval, &evaluation)?;

    Ok(PipelineSummary {
        config: cfg.clone(),
        paths,
        corpus,
        tests,
        labels,
        graphs: graph_summary,
        train_projects,
        test_projects,
        training,
        evaluation,
    })
}
