//! One function per pipeline stage. Each reads and writes the on-disk
//! formats so stages can also run separately from the command line.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use forge_core::corpusgen::{self, GenConfig, LoadedProject};
use forge_core::graphs::{labeled_graph, program_graphs, read_graphs, write_graphs, GraphError, MethodGraph};
use forge_core::invariants::{infer_records, Condition, InferenceConfig, Invariant};
use forge_core::labeler::{label_corpus, make_splits, read_labeled, write_labeled, LabelSummary, LabeledInvariant};
use forge_core::metrics::{
    join_golden, join_labeled, partial_auc, per_method_eval, per_project_eval, read_jsonl, roc, write_jsonl,
    write_roc_csv, GoldenRecord, RocCurve, ScoreRecord, Scored,
};
use forge_core::minilang::{run_tests, PerTestSink, Program};
use forge_core::trace::{read_records, read_trace_dir, write_records, write_trace_file, TraceRecord};
use forge_model::Model;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EvalSettings, LabelSettings};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

// ---------------------------------------------------------------------------
// Corpus

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub projects: usize,
    pub methods: usize,
    pub tests: usize,
    pub ground_truth: usize,
}

pub fn gen_corpus(cfg: &GenConfig, out: &Path) -> Result<CorpusSummary> {
    let projects = corpusgen::generate(cfg)?;
    corpusgen::write_corpus(out, &projects)?;
    let mut s = CorpusSummary { projects: projects.len(), methods: 0, tests: 0, ground_truth: 0 };
    for p in &projects {
        let program = p.program()?;
        s.methods += program.core.len();
        s.tests += program.tests().len();
        s.ground_truth += p.ground_truth.len();
    }
    Ok(s)
}

/// A single `.mini` file, one project directory, or a directory of projects.
pub fn load_programs(path: &Path, core: Option<&[String]>) -> Result<Vec<LoadedProject>> {
    let mut projects = if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut program = forge_core::minilang::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
        let all: Vec<String> = program.functions.iter().filter(|f| !f.is_test()).map(|f| f.name.clone()).collect();
        program.set_core(all);
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("program").to_string();
        vec![LoadedProject { name, program }]
    } else if path.join("src").is_dir() {
        vec![corpusgen::load_project(path)?]
    } else if path.is_dir() {
        corpusgen::load_corpus(path)?
    } else {
        bail!("{} is neither a .mini file nor a project or corpus directory", path.display());
    };
    if projects.is_empty() {
        bail!("no projects under {}", path.display());
    }
    if let Some(names) = core {
        for p in &mut projects {
            p.program.set_core(names);
        }
    }
    Ok(projects)
}

// ---------------------------------------------------------------------------
// Tracing

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRunSummary {
    pub project: String,
    pub tests: usize,
    pub passed: usize,
    pub records: usize,
}

/// Runs the matching tests and writes one trace file per test into `out`.
pub fn run_program_tests(
    project: &str,
    program: &Program,
    pattern: &glob::Pattern,
    seed: u64,
    out: &Path,
) -> Result<TestRunSummary> {
    let selected: BTreeSet<String> = program.tests().into_iter().filter(|t| pattern.matches(t)).collect();
    let mut sink = PerTestSink::default();
    let report = run_tests(program, &selected, &mut sink, seed)?;
    for t in report.tests.iter().filter(|t| !t.passed) {
        tracing::warn!(project, test = %t.name, error = t.error.as_deref().unwrap_or(""), "test failed");
    }
    std::fs::create_dir_all(out)?;
    let mut records = 0;
    for (test, recs) in &sink.traces {
        write_trace_file(out, test, recs)?;
        records += recs.len();
    }
    Ok(TestRunSummary { project: project.to_string(), tests: selected.len(), passed: report.passed(), records })
}

/// Traces every project into `<out>/<project>/` (or straight into `out`
/// when there is a single project and `flat` is set).
pub fn run_all_tests(
    projects: &[LoadedProject],
    pattern: &glob::Pattern,
    seed: u64,
    out: &Path,
    flat: bool,
) -> Result<Vec<TestRunSummary>> {
    projects
        .par_iter()
        .map(|p| {
            let dir = if flat && projects.len() == 1 { out.to_path_buf() } else { out.join(&p.name) };
            run_program_tests(&p.name, &p.program, pattern, seed, &dir)
        })
        .collect()
}

pub fn compose(trace_dir: &Path, tests: &BTreeSet<String>, out: &Path) -> Result<usize> {
    let per_test = read_trace_dir(trace_dir)?;
    let records = forge_core::trace::compose_view(&per_test, tests)?;
    let mut w = create(out)?;
    write_records(&mut w, records.iter().copied())?;
    w.flush()?;
    Ok(records.len())
}

// ---------------------------------------------------------------------------
// Inference and labeling

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferredRecord {
    pub method: String,
    pub point: Condition,
    pub rendered: String,
    pub invariant: Invariant,
}

/// Invariants of every program point present in the records.
pub fn infer_all(records: &[TraceRecord], min_support: usize) -> Result<Vec<InferredRecord>> {
    let cfg = InferenceConfig { min_support };
    let points: BTreeSet<(String, Condition)> =
        records.iter().map(|r| (r.method.clone(), Condition::from(r.point))).collect();
    let mut out = Vec::new();
    for (method, point) in points {
        for inv in infer_records(records, &method, point, &cfg)? {
            out.push(InferredRecord { method: method.clone(), point, rendered: inv.to_string(), invariant: inv });
        }
    }
    Ok(out)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRecord>> {
    read_records(open(path)?).with_context(|| format!("reading {}", path.display()))
}

/// Labels one project's per-test traces by cross-validation over splits.
pub fn label_project(
    project: &str,
    trace_dir: &Path,
    settings: &LabelSettings,
    seed: u64,
) -> Result<(Vec<LabeledInvariant>, LabelSummary)> {
    let per_test = read_trace_dir(trace_dir).with_context(|| format!("reading traces in {}", trace_dir.display()))?;
    let tests: BTreeSet<String> = per_test.keys().cloned().collect();
    let plan = make_splits(&tests, settings.splits, settings.fraction, seed)?;
    let cfg = InferenceConfig { min_support: settings.min_support };
    let (mut labeled, summary) = label_corpus(&per_test, &plan, &cfg, settings.min_splits)?;
    for l in &mut labeled {
        l.project = project.to_string();
    }
    Ok((labeled, summary))
}

/// Project trace directories under `dir`: the directory itself when it
/// holds trace files, otherwise each subdirectory.
pub fn trace_projects(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let has_traces = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .any(|e| e.path().extension().and_then(|x| x.to_str()) == Some("trace"));
    if has_traces {
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        return Ok(vec![(name, dir.to_path_buf())]);
    }
    let mut dirs: Vec<PathBuf> =
        std::fs::read_dir(dir)?.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("no trace files or project directories in {}", dir.display());
    }
    Ok(dirs
        .into_iter()
        .map(|d| (d.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string(), d))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LabelTotals {
    pub projects: usize,
    pub labeled: usize,
    pub valid: usize,
    pub invalid: usize,
    pub skipped_points: usize,
}

pub fn label_all(
    projects: &[(String, PathBuf)],
    settings: &LabelSettings,
    seed: u64,
) -> Result<(Vec<LabeledInvariant>, LabelTotals)> {
    let mut all = Vec::new();
    let mut totals = LabelTotals { projects: projects.len(), ..Default::default() };
    for (name, dir) in projects {
        let (labeled, s) = label_project(name, dir, settings, seed)?;
        tracing::info!(project = %name, labeled = s.labeled, valid = s.valid, invalid = s.invalid, "labeled");
        totals.labeled += s.labeled;
        totals.valid += s.valid;
        totals.invalid += s.invalid;
        totals.skipped_points += s.skipped.len();
        all.extend(labeled);
    }
    Ok((all, totals))
}

pub fn write_labeled_file(path: &Path, labeled: &[LabeledInvariant]) -> Result<()> {
    let mut w = create(path)?;
    write_labeled(&mut w, labeled)?;
    w.flush()?;
    Ok(())
}

pub fn read_labeled_file(path: &Path) -> Result<Vec<LabeledInvariant>> {
    read_labeled(open(path)?).with_context(|| format!("reading {}", path.display()))
}

// ---------------------------------------------------------------------------
// Graphs

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct GraphSummary {
    pub graphs: usize,
    /// Invariants of methods over the node limit.
    pub too_large: usize,
    /// Invariants whose method is missing from the programs.
    pub missing_method: usize,
}

/// One labeled graph per labeled invariant, grouped by project.
pub fn build_graphs(
    labeled: &[LabeledInvariant],
    programs: &[LoadedProject],
) -> Result<(BTreeMap<String, Vec<MethodGraph>>, GraphSummary)> {
    let by_name: BTreeMap<&str, &LoadedProject> = programs.iter().map(|p| (p.name.as_str(), p)).collect();
    let mut bases: BTreeMap<&str, BTreeMap<String, Result<MethodGraph, GraphError>>> = BTreeMap::new();
    let mut out: BTreeMap<String, Vec<MethodGraph>> = BTreeMap::new();
    let mut summary = GraphSummary::default();
    for l in labeled {
        let Some(project) = by_name.get(l.project.as_str()) else {
            bail!("labeled invariant for unknown project `{}`", l.project);
        };
        let methods = bases.entry(project.name.as_str()).or_insert_with(|| program_graphs(&project.program, &project.name));
        match methods.get(&l.method) {
            None => summary.missing_method += 1,
            Some(Err(GraphError::MethodTooLarge(_))) => summary.too_large += 1,
            Some(Err(e)) => bail!("graph of `{}`: {e}", l.method),
            Some(Ok(base)) => {
                let mut g = labeled_graph(base, &l.invariant, Some(l.label))?;
                g.score = Some(l.score);
                out.entry(l.project.clone()).or_default().push(g);
                summary.graphs += 1;
            }
        }
    }
    Ok((out, summary))
}

pub fn write_graph_dir(dir: &Path, graphs: &BTreeMap<String, Vec<MethodGraph>>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (project, gs) in graphs {
        let mut w = create(&dir.join(format!("{project}.jsonl")))?;
        write_graphs(&mut w, gs)?;
        w.flush()?;
    }
    Ok(())
}

/// Graph files under `dir` (or `dir` itself if it is a file), by project.
pub fn read_graph_dir(dir: &Path) -> Result<BTreeMap<String, Vec<MethodGraph>>> {
    let files: Vec<PathBuf> = if dir.is_file() {
        vec![dir.to_path_buf()]
    } else {
        let mut f: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().and_then(|x| x.to_str()) == Some("jsonl"))
            .collect();
        f.sort();
        f
    };
    let mut out: BTreeMap<String, Vec<MethodGraph>> = BTreeMap::new();
    for f in files {
        for g in read_graphs(open(&f)?).with_context(|| format!("reading {}", f.display()))? {
            out.entry(g.project.clone()).or_default().push(g);
        }
    }
    Ok(out)
}

/// Keeps the named projects (`include`) or drops them (`exclude`).
pub fn select_projects(
    graphs: &BTreeMap<String, Vec<MethodGraph>>,
    include: &[String],
    exclude: &[String],
) -> Result<Vec<MethodGraph>> {
    for name in include.iter().chain(exclude) {
        if !graphs.contains_key(name) {
            bail!("no graphs for project `{name}`");
        }
    }
    Ok(graphs
        .iter()
        .filter(|(p, _)| (include.is_empty() || include.contains(p)) && !exclude.contains(p))
        .flat_map(|(_, gs)| gs.iter().cloned())
        .collect())
}

// ---------------------------------------------------------------------------
// Ranking and evaluation

pub fn rank(model: &Model, graphs: &[MethodGraph]) -> Result<Vec<ScoreRecord>> {
    let scores = model.predict(graphs)?;
    Ok(graphs
        .iter()
        .zip(scores)
        .map(|(g, score)| ScoreRecord {
            project: g.project.clone(),
            method: g.method.clone(),
            invariant: g.invariant.clone().unwrap_or_default(),
            score,
            label: g.label,
        })
        .collect())
}

pub fn write_scores(path: &Path, scores: &[ScoreRecord]) -> Result<()> {
    let mut w = create(path)?;
    write_jsonl(&mut w, scores)?;
    w.flush()?;
    Ok(())
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    read_jsonl(open(path)?).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

pub fn read_golden(path: &Path) -> Result<Vec<GoldenRecord>> {
    read_jsonl(open(path)?).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub mean_auc: f64,
    pub methods: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub invariants: usize,
    pub valid: usize,
    pub invalid: usize,
    pub auc: f64,
    /// Partial AUC keyed by the FPR cut, e.g. "0.25".
    pub partial_auc: BTreeMap<String, f64>,
    pub per_project_auc: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_method: Option<MethodSummary>,
}

/// Pooled ROC over all scored invariants, plus the requested breakdowns.
pub fn evaluate(scored: &[Scored], settings: &EvalSettings) -> Result<(EvalReport, RocCurve)> {
    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    let labels: Vec<bool> = scored.iter().map(|s| s.valid).collect();
    let curve = roc(&scores, &labels)?;
    let partial = settings.partial_fpr.iter().map(|&f| (f.to_string(), partial_auc(&curve, f))).collect();
    let per_project_auc = per_project_eval(scored).into_iter().map(|(p, c)| (p, c.auc)).collect();
    let per_method = settings.per_method.then(|| {
        let e = per_method_eval(scored);
        MethodSummary { mean_auc: e.mean_auc, methods: e.aucs.len(), excluded: e.excluded }
    });
    let valid = labels.iter().filter(|&&v| v).count();
    let report = EvalReport {
        invariants: scored.len(),
        valid,
        invalid: scored.len() - valid,
        auc: curve.auc,
        partial_auc: partial,
        per_project_auc,
        per_method,
    };
    Ok((report, curve))
}

/// Scores joined with golden annotations when given, else with mined labels.
pub fn join_scores(
    scores: &[ScoreRecord],
    labeled: Option<&[LabeledInvariant]>,
    golden: Option<&[GoldenRecord]>,
) -> Result<Vec<Scored>> {
    let joined = match (golden, labeled) {
        (Some(g), _) => join_golden(scores, g),
        (None, Some(l)) => join_labeled(scores, l),
        (None, None) => scores
            .iter()
            .filter_map(|s| {
                s.label.map(|l| Scored {
                    project: s.project.clone(),
                    method: s.method.clone(),
                    score: s.score,
                    valid: l.is_valid(),
                })
            })
            .collect(),
    };
    if joined.is_empty() {
        bail!("no scored invariant has a label");
    }
    Ok(joined)
}

pub fn write_roc(path: &Path, curve: &RocCurve) -> Result<()> {
    let mut w = create(path)?;
    write_roc_csv(&mut w, curve)?;
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
