//! Pipeline configuration file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use forge_core::corpusgen::GenConfig;
use forge_core::labeler::{DEFAULT_FRACTION, DEFAULT_MIN_SPLITS, DEFAULT_SPLITS};
use forge_model::{ModelConfig, ModelKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelSettings {
    pub splits: usize,
    pub fraction: f64,
    pub min_splits: usize,
    pub min_support: usize,
}

impl Default for LabelSettings {
    fn default() -> Self {
        LabelSettings {
            splits: DEFAULT_SPLITS,
            fraction: DEFAULT_FRACTION,
            min_splits: DEFAULT_MIN_SPLITS,
            min_support: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Projects scored and evaluated; the rest train the model. When empty,
    /// the last `holdout_projects` projects by name are held out.
    pub test_projects: Vec<String>,
    pub holdout_projects: usize,
    pub partial_fpr: Vec<f64>,
    pub per_method: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { test_projects: Vec::new(), holdout_projects: 1, partial_fpr: vec![0.05, 0.25], per_method: true }
    }
}

/// Input paths resolve against the config file's directory, outputs against
/// the work directory (which defaults to the same place).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub traces: PathBuf,
    pub labels: PathBuf,
    pub graphs: PathBuf,
    pub checkpoints: PathBuf,
    pub scores: PathBuf,
    pub roc: PathBuf,
    pub eval: PathBuf,
    pub golden: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: "corpus".into(),
            traces: "traces".into(),
            labels: "labeled.jsonl".into(),
            graphs: "graphs".into(),
            checkpoints: "ckpt".into(),
            scores: "scores.jsonl".into(),
            roc: "roc.csv".into(),
            eval: "eval.json".into(),
            golden: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    /// When present the corpus is generated into the work directory;
    /// otherwise `paths.corpus` names an existing corpus.
    pub generate: Option<GenConfig>,
    /// Glob over test function names.
    pub tests: String,
    pub labeler: LabelSettings,
    pub model: ModelConfig,
    pub evaluation: EvalSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: Paths::default(),
            generate: None,
            tests: "test_*".into(),
            labeler: LabelSettings::default(),
            model: ModelConfig::new(ModelKind::Ggnn),
            evaluation: EvalSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = &self.generate {
            g.validate()?;
        }
        glob::Pattern::new(&self.tests).with_context(|| format!("bad test pattern `{}`", self.tests))?;
        let l = &self.labeler;
        if !(l.fraction > 0.0 && l.fraction <= 1.0) {
            bail!("labeler.fraction must lie in (0, 1]");
        }
        if l.splits == 0 || l.min_support == 0 {
            bail!("labeler.splits and labeler.min_support must be positive");
        }
        self.model.validate()?;
        for &f in &self.evaluation.partial_fpr {
            if !(f > 0.0 && f <= 1.0) {
                bail!("partial_fpr value {f} outside (0, 1]");
            }
        }
        Ok(())
    }
}

/// Resolved locations of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunPaths {
    pub corpus: PathBuf,
    pub traces: PathBuf,
    pub labels: PathBuf,
    pub graphs: PathBuf,
    pub checkpoints: PathBuf,
    pub scores: PathBuf,
    pub roc: PathBuf,
    pub eval: PathBuf,
    pub golden: Option<PathBuf>,
}

impl RunPaths {
    pub fn resolve(cfg: &PipelineConfig, config_dir: &Path, work_dir: &Path) -> Self {
        let p = &cfg.paths;
        let out = |x: &PathBuf| work_dir.join(x);
        RunPaths {
            corpus: if cfg.generate.is_some() { out(&p.corpus) } else { config_dir.join(&p.corpus) },
            traces: out(&p.traces),
            labels: out(&p.labels),
            graphs: out(&p.graphs),
            checkpoints: out(&p.checkpoints),
            scores: out(&p.scores),
            roc: out(&p.roc),
            eval: out(&p.eval),
            golden: p.golden.as_ref().map(|g| config_dir.join(g)),
        }
    }
}
