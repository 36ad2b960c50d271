use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use forge_core::corpusgen::GenConfig;
use forge_core::metrics::GoldenRecord;
use forge_model::{Model, ModelConfig, ModelKind};
use serde_json::{json, Value};

use forge_cli::config::{EvalSettings, LabelSettings, PipelineConfig};
use forge_cli::pipeline::{run_pipeline, train_with_checkpoints};
use forge_cli::stages;

#[derive(Parser)]
#[command(name = "forge", version, about = "Mine, label and rank method invariants")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus of projects, tests and ground truth.
    GenCorpus {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "FORGE_SEED")]
        seed: Option<u64>,
    },
    /// Run tests and write one trace file per test.
    RunTests {
        /// A .mini file, a project directory or a corpus directory.
        path: PathBuf,
        /// Comma-separated functions to trace (default: every non-test function).
        #[arg(long, value_delimiter = ',')]
        core: Option<Vec<String>>,
        #[arg(long, default_value = "test_*")]
        tests: String,
        #[arg(long, env = "FORGE_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trace_out: PathBuf,
    },
    /// Concatenate the traces of the listed tests.
    Compose {
        #[arg(long)]
        trace_dir: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        tests: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Infer invariants from one trace file.
    Infer {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_support: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label invariants by cross-validation over test splits.
    Label {
        /// Per-test traces of one project, or one subdirectory per project.
        #[arg(long)]
        trace_dir: PathBuf,
        #[arg(long, default_value_t = forge_core::labeler::DEFAULT_SPLITS)]
        splits: usize,
        #[arg(long, default_value_t = forge_core::labeler::DEFAULT_FRACTION)]
        fraction: f64,
        #[arg(long, env = "FORGE_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = forge_core::labeler::DEFAULT_MIN_SPLITS)]
        min_splits: usize,
        #[arg(long, default_value_t = 5)]
        min_support: usize,
        /// Project name when the trace directory holds a single project.
        #[arg(long)]
        project: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a program graph per labeled invariant.
    Graph {
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long)]
        programs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a validator and checkpoint every epoch.
    Train {
        #[arg(long)]
        model: Option<ModelKind>,
        /// Model settings file; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, env = "FORGE_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        batch_budget: Option<usize>,
        /// Train only on these projects.
        #[arg(long, value_delimiter = ',')]
        projects: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        exclude_projects: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score graphs with a checkpoint.
    Rank {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long, value_delimiter = ',')]
        projects: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// ROC, partial AUC and per-method AUC of scores against labels.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        golden: Option<PathBuf>,
        #[arg(long)]
        per_method: bool,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.25", value_parser = parse_fpr)]
        partial_fpr: Vec<f64>,
        #[arg(long)]
        roc_out: Option<PathBuf>,
    },
    /// Run every stage from one config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Where outputs go (default: the config file's directory).
        #[arg(long)]
        work_dir: Option<PathBuf>,
        #[arg(long, env = "FORGE_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

fn parse_fpr(s: &str) -> Result<f64, String> {
    let f: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if f > 0.0 && f <= 1.0 {
        Ok(f)
    } else {
        Err(format!("{f} is outside (0, 1]"))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn name(c: &Command) -> &'static str {
    match c {
        Command::GenCorpus { .. } => "gen-corpus",
        Command::RunTests { .. } => "run-tests",
        Command::Compose { .. } => "compose",
        Command::Infer { .. } => "infer",
        Command::Label { .. } => "label",
        Command::Graph { .. } => "graph",
        Command::Train { .. } => "train",
        Command::Rank { .. } => "rank",
        Command::Eval { .. } => "eval",
        Command::Pipeline { .. } => "pipeline",
    }
}

fn run(command: Command) -> Result<Value> {
    match command {
        Command::GenCorpus { config, out, seed } => {
            let mut cfg: GenConfig = match config {
                Some(p) => read_json(&p)?,
                None => GenConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let s = stages::gen_corpus(&cfg, &out)?;
            Ok(json!({ "config": cfg, "out": out, "corpus": s }))
        }
        Command::RunTests { path, core, tests, seed, trace_out } => {
            let pattern = glob::Pattern::new(&tests).with_context(|| format!("bad --tests pattern `{tests}`"))?;
            let projects = stages::load_programs(&path, core.as_deref())?;
            let runs = stages::run_all_tests(&projects, &pattern, seed, &trace_out, true)?;
            Ok(json!({ "seed": seed, "trace_out": trace_out, "projects": runs }))
        }
        Command::Compose { trace_dir, tests, out } => {
            let tests: BTreeSet<String> = tests.into_iter().collect();
            let n = stages::compose(&trace_dir, &tests, &out)?;
            Ok(json!({ "tests": tests, "records": n, "out": out }))
        }
        Command::Infer { trace, min_support, out } => {
            let records = stages::read_trace_file(&trace)?;
            let inferred = stages::infer_all(&records, min_support)?;
            let mut w = std::io::BufWriter::new(std::fs::File::create(&out)?);
            forge_core::metrics::write_jsonl(&mut w, &inferred)?;
            std::io::Write::flush(&mut w)?;
            Ok(json!({ "records": records.len(), "invariants": inferred.len(), "out": out }))
        }
        Command::Label { trace_dir, splits, fraction, seed, min_splits, min_support, project, out } => {
            let settings = LabelSettings { splits, fraction, min_splits, min_support };
            let mut projects = stages::trace_projects(&trace_dir)?;
            if let (Some(name), [single]) = (project, projects.as_mut_slice()) {
                single.0 = name;
            }
            let (labeled, totals) = stages::label_all(&projects, &settings, seed)?;
            stages::write_labeled_file(&out, &labeled)?;
            Ok(json!({ "settings": settings, "seed": seed, "labels": totals, "out": out }))
        }
        Command::Graph { labeled, programs, out } => {
            let labeled = stages::read_labeled_file(&labeled)?;
            let programs = stages::load_programs(&programs, None)?;
            let (graphs, summary) = stages::build_graphs(&labeled, &programs)?;
            stages::write_graph_dir(&out, &graphs)?;
            Ok(json!({ "graphs": summary, "out": out }))
        }
        Command::Train { model, config, graphs, epochs, seed, batch_budget, projects, exclude_projects, out } => {
            let mut cfg: ModelConfig = match &config {
                Some(p) => read_json(p)?,
                None => ModelConfig::new(model.unwrap_or(ModelKind::Ggnn)),
            };
            if let Some(k) = model {
                cfg.kind = k;
            }
            if let Some(e) = epochs {
                cfg.ggnn.epochs = e;
                cfg.rnn.epochs = e;
            }
            if let Some(s) = seed {
                cfg.set_seed(s);
            }
            if let Some(b) = batch_budget {
                cfg.ggnn.batch_token_budget = b;
                cfg.rnn.batch_token_budget = b;
            }
            let all = stages::read_graph_dir(&graphs)?;
            let selected = stages::select_projects(&all, &projects, &exclude_projects)?;
            let (m, report) = train_with_checkpoints(cfg.clone(), &selected, &out)?;
            let last = forge_cli::pipeline::checkpoint_path(&out, m.epoch);
            Ok(json!({ "config": cfg, "graphs": selected.len(), "training": report, "checkpoint": last }))
        }
        Command::Rank { ckpt, graphs, projects, out } => {
            let model = Model::load(&ckpt)?;
            let all = stages::read_graph_dir(&graphs)?;
            let selected = stages::select_projects(&all, &projects, &[])?;
            let scores = stages::rank(&model, &selected)?;
            stages::write_scores(&out, &scores)?;
            Ok(json!({ "model": model.kind(), "epoch": model.epoch, "scored": scores.len(), "out": out }))
        }
        Command::Eval { scores, labels, golden, per_method, partial_fpr, roc_out } => {
            let scores = stages::read_scores(&scores)?;
            let labeled = labels.as_deref().map(stages::read_labeled_file).transpose()?;
            let golden: Option<Vec<GoldenRecord>> = golden.as_deref().map(stages::read_golden).transpose()?;
            let scored = stages::join_scores(&scores, labeled.as_deref(), golden.as_deref())?;
            let settings = EvalSettings { partial_fpr, per_method, ..EvalSettings::default() };
            let (report, curve) = stages::evaluate(&scored, &settings)?;
            if let Some(p) = &roc_out {
                stages::write_roc(p, &curve)?;
            }
            Ok(json!({ "evaluation": report, "roc_out": roc_out }))
        }
        Command::Pipeline { config, work_dir, seed, model, epochs } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(k) = model {
                cfg.model.kind = k;
            }
            if let Some(e) = epochs {
                cfg.model.ggnn.epochs = e;
                cfg.model.rnn.epochs = e;
            }
            let config_dir = config.parent().map(Path::to_path_buf).unwrap_or_default();
            let work_dir = work_dir.unwrap_or_else(|| config_dir.clone());
            let summary = run_pipeline(&cfg, &config_dir, &work_dir)?;
            Ok(serde_json::to_value(summary)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(2);
        }
    }
    let command = name(&cli.command);
    match run(cli.command) {
        Ok(mut summary) => {
            if let Value::Object(map) = &mut summary {
                map.insert("status".into(), "ok".into());
                map.insert("command".into(), command.into());
            }
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            println!("{}", json!({ "command": command, "status": "error", "error": format!("{e:#}") }));
            ExitCode::from(1)
        }
    }
}
