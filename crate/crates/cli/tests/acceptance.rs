//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test -p forge-cli --test acceptance -- 7 8`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use forge_core::corpusgen::{generate, Coverage, GenConfig, GeneratedProject, TemplateWeights};
use forge_core::graphs::{labeled_graph, program_graphs, MethodGraph};
use forge_core::invariants::{
    enumerate_candidates, evaluate, implies, infer_records, Condition, InferenceConfig, Invariant, MethodSchema,
    Predicate, Term,
};
use forge_core::labeler::{label_corpus, make_splits, sample_split, Label, LabeledInvariant, SplitPlan};
use forge_core::metrics::{partial_auc, per_method_eval, roc, RocCurve, Scored};
use forge_core::minilang::{parse, run_tests, PerTestSink};
use forge_core::testkit::{brute_force_infer, RandomMethod};
use forge_core::trace::{Point, SnapValue, TraceRecord, ValueSnapshot};
use forge_model::gradcheck::check_gradients;
use forge_model::{train, GgnnConfig, Model, ModelConfig, ModelKind, RnnConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let selected: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, cross_validation_scores),
        (2, call_sampling),
        (3, implication_soundness),
        (4, inference_oracle),
        (5, roc_correctness),
        (6, gradient_checks),
        (7, context_sensitivity),
        (8, intra_vs_cross),
        (9, pipeline_determinism),
        (10, split_coverage),
    ];
    let mut failed = 0;
    for (n, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {n}: PASS ({secs:.1}s) {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n}: FAIL ({secs:.1}s) {d}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn abs_calls(test: &str, values: &[i64]) -> Vec<TraceRecord> {
    values
        .iter()
        .enumerate()
        .map(|(k, &v)| TraceRecord {
            test: test.into(),
            method: "abs".into(),
            point: Point::Entry,
            call_index: k as u64 + 1,
            vars: vec![ValueSnapshot::new("val", SnapValue::Int(v))],
        })
        .collect()
}

fn cross_validation_scores() -> Outcome {
    let start = Instant::now();
    let per_test: BTreeMap<String, Vec<TraceRecord>> = [
        ("test_zero".to_string(), abs_calls("test_zero", &[0, 3, 8, 1, 6])),
        ("test_pos".to_string(), abs_calls("test_pos", &[1, 3, 8, 2, 6])),
    ]
    .into();
    // 20 splits see a zero and infer val >= 0, 5 see only positives and infer val >= 1
    let both: BTreeSet<String> = per_test.keys().cloned().collect();
    let pos: BTreeSet<String> = ["test_pos".to_string()].into();
    let mut splits = vec![both; 20];
    splits.extend(vec![pos; 5]);
    let plan = SplitPlan { n_splits: 25, fraction: 1.0, seed: 0, splits };
    let (labeled, _) = label_corpus(&per_test, &plan, &InferenceConfig::default(), 10).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let find = |c: i64| {
        let inv = Invariant::new("abs", Condition::Pre, Predicate::NumGe(Term::var("val"), c));
        labeled.iter().find(|l| l.invariant == inv).cloned()
    };
    let (Some(ge1), Some(ge0)) = (find(1), find(0)) else {
        return Err("val >= 0 or val >= 1 was not labeled".into());
    };
    let detail = format!(
        "score(val>=1)={} {:?}, score(val>=0)={} {:?}, {:.3}s",
        ge1.score,
        ge1.label,
        ge0.score,
        ge0.label,
        elapsed.as_secs_f64()
    );
    check(
        ge1.score == 0.2
            && ge1.label == Label::Invalid
            && ge0.score == 1.0
            && ge0.label == Label::Valid
            && elapsed < Duration::from_secs(1),
        detail,
    )
}

fn call_sampling() -> Outcome {
    let program = parse(
        "fn f(x) { return x; }
         fn test_loop() { i = 0; while (i < 2500) { f(i); i = i + 1; } }",
    )
    .map_err(|e| e.to_string())?;
    let mut sink = PerTestSink::default();
    let report = run_tests(&program, &program.tests(), &mut sink, 0).map_err(|e| e.to_string())?;
    let traced: BTreeSet<u64> = sink
        .traces
        .values()
        .flatten()
        .filter(|r| r.method == "f" && r.point == Point::Entry)
        .map(|r| r.call_index)
        .collect();
    let mut expected: BTreeSet<u64> = (1..=10).collect();
    expected.extend((20..=100).step_by(10));
    expected.extend((200..=1000).step_by(100));
    expected.insert(2000);
    check(
        report.call_counts.get("f") == Some(&2500) && traced == expected,
        format!("{} calls, {} traced", report.call_counts.get("f").copied().unwrap_or(0), traced.len()),
    )
}

fn implication_soundness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut snapshots, mut pairs_total, mut premise_true, mut violations) = (0usize, 0usize, 0usize, 0usize);
    let mut first_violation = None;
    let mut k = 0;
    while snapshots < 100_000 {
        let m = RandomMethod::new(&mut rng, "m");
        let point = if k % 2 == 0 { Point::Entry } else { Point::Exit };
        k += 1;
        let records = m.records(&mut rng, point, 500);
        let schema = MethodSchema::from_records("m", point.into(), records.iter());
        let cands = enumerate_candidates(&schema);
        let mut pairs = Vec::new();
        for (a, j) in cands.iter().enumerate() {
            for (b, i) in cands.iter().enumerate() {
                if a != b && implies(j, i) {
                    pairs.push((a, b));
                }
            }
        }
        pairs_total += pairs.len();
        for r in &records {
            let truth: Vec<bool> = cands.iter().map(|c| evaluate(c, r)).collect();
            for &(a, b) in &pairs {
                if truth[a] {
                    premise_true += 1;
                    if !truth[b] {
                        violations += 1;
                        first_violation.get_or_insert_with(|| format!("{} => {}", cands[a], cands[b]));
                    }
                }
            }
        }
        snapshots += records.len();
    }
    let elapsed = start.elapsed();
    let mut detail = format!(
        "{snapshots} snapshots, {pairs_total} implied pairs, {premise_true} premise hits, {violations} violations"
    );
    if let Some(v) = first_violation {
        detail.push_str(&format!(", e.g. {v}"));
    }
    check(violations == 0 && elapsed < Duration::from_secs(60), detail)
}

fn inference_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut mismatches = Vec::new();
    let mut total_invariants = 0;
    for case in 0..200 {
        let m = RandomMethod::new(&mut rng, "m");
        let point = if rng.random_bool(0.5) { Point::Exit } else { Point::Entry };
        let n = rng.random_range(1..=50);
        let min_support = rng.random_range(1..=5);
        let records = m.records(&mut rng, point, n);
        let fast = infer_records(&records, "m", point.into(), &InferenceConfig { min_support })
            .map_err(|e| e.to_string())?;
        let slow = brute_force_infer(&records, "m", point.into(), min_support);
        total_invariants += slow.len();
        if fast != slow {
            mismatches.push(case);
        }
    }
    check(
        mismatches.is_empty(),
        format!("200 trace sets, {total_invariants} oracle invariants, mismatching cases {mismatches:?}"),
    )
}

/// Probability that a random positive outscores a random negative, ties 1/2.
fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn roc_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    let mut sets = 0;
    while sets < 100 {
        let n = rng.random_range(2..300);
        // coarse scores so ties are common
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..20) as f64 / 19.0).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if !(labels.contains(&true) && labels.contains(&false)) {
            continue;
        }
        let c = roc(&scores, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((c.auc - mann_whitney(&scores, &labels)).abs());
        sets += 1;
    }

    let n = 10_000;
    let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    let random_auc = roc(&scores, &labels).map_err(|e| e.to_string())?.auc;

    let diagonal = RocCurve { points: vec![(0.0, 0.0), (1.0, 1.0)], auc: 0.5 };
    let pauc = partial_auc(&diagonal, 0.25);

    check(
        worst < 1e-9 && (random_auc - 0.5).abs() <= 0.02 && pauc == 0.03125,
        format!("max |auc - mann-whitney| = {worst:.2e}, random auc {random_auc:.4}, diagonal pauc@0.25 = {pauc}"),
    )
}

/// Labeled graphs built straight from a generated corpus's ground truth.
fn ground_truth_graphs(cfg: &GenConfig) -> Result<Vec<MethodGraph>, String> {
    let mut out = Vec::new();
    for p in generate(cfg).map_err(|e| e.to_string())? {
        let bases = program_graphs(&p.program().map_err(|e| e.to_string())?, &p.name);
        for gt in &p.ground_truth {
            let base = bases[&gt.method].as_ref().map_err(|e| e.to_string())?;
            out.push(labeled_graph(base, &gt.structured, Some(gt.label)).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

fn gradient_checks() -> Outcome {
    let gen = GenConfig { n_projects: 2, methods_per_project: 6, coverage: Coverage::Full, seed: 5, ..GenConfig::default() };
    let graphs = ground_truth_graphs(&gen)?;
    let mut lines = Vec::new();
    let mut ok = true;
    for kind in [ModelKind::Ggnn, ModelKind::Nocontext, ModelKind::Rnn] {
        let mut worst = 0.0f64;
        let mut checked = 0;
        for trial in 0..3u64 {
            let config = ModelConfig {
                kind,
                ggnn: GgnnConfig { hidden_dim: 6, steps: 8, head_hidden: 5, seed: trial, ..GgnnConfig::default() },
                rnn: RnnConfig { embedding_dim: 5, state_per_direction: 4, head_hidden: 5, seed: trial, ..RnnConfig::default() },
            };
            let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
            let batch: Vec<MethodGraph> = (0..3).map(|_| graphs[rng.random_range(0..graphs.len())].clone()).collect();
            let prepared: Vec<MethodGraph> =
                batch.iter().map(|g| Model::prepare(kind, g)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
            let vocab = forge_core::graphs::build_vocab(&prepared);
            let mut model = Model::new(config, vocab).map_err(|e| e.to_string())?;
            // move off the zero biases so every parameter gets a nonzero gradient
            for t in model.params.tensors.iter_mut() {
                t.mapv_inplace(|x| x + rng.random_range(-0.2..0.2));
            }
            let encoded = batch.iter().map(|g| model.encode(g)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
            let refs: Vec<_> = encoded.iter().collect();
            let r = check_gradients(&model, &refs, 1e-4, 1e-6).map_err(|e| e.to_string())?;
            worst = worst.max(r.max_rel_err);
            checked += r.checked;
        }
        ok &= worst < 1e-4 && checked > 0;
        lines.push(format!("{kind}: {checked} entries, max rel err {worst:.2e}"));
    }
    check(ok, lines.join("; "))
}

fn traces_of(p: &GeneratedProject) -> Result<BTreeMap<String, Vec<TraceRecord>>, String> {
    let program = p.program().map_err(|e| e.to_string())?;
    let mut sink = PerTestSink::default();
    run_tests(&program, &program.tests(), &mut sink, 0).map_err(|e| e.to_string())?;
    Ok(sink.traces)
}

/// Runs the tests of every project and labels the mined invariants with the
/// default cross-validation settings.
fn mine(projects: &[GeneratedProject], seed: u64) -> Result<Vec<Vec<LabeledInvariant>>, String> {
    projects
        .iter()
        .map(|p| {
            let per_test = traces_of(p)?;
            let tests = per_test.keys().cloned().collect();
            let plan = make_splits(&tests, 100, 0.1, seed).map_err(|e| e.to_string())?;
            let (labeled, _) =
                label_corpus(&per_test, &plan, &InferenceConfig::default(), 10).map_err(|e| e.to_string())?;
            Ok(labeled)
        })
        .collect()
}

fn graphs_for(p: &GeneratedProject, labeled: &[&LabeledInvariant]) -> Result<Vec<MethodGraph>, String> {
    let bases = program_graphs(&p.program().map_err(|e| e.to_string())?, &p.name);
    labeled
        .iter()
        .filter_map(|l| bases.get(&l.method).and_then(|b| b.as_ref().ok()).map(|b| (b, l)))
        .map(|(b, l)| labeled_graph(b, &l.invariant, Some(l.label)).map_err(|e| e.to_string()))
        .collect()
}

fn pooled_auc(model: &Model, graphs: &[MethodGraph]) -> Result<f64, String> {
    let scores = model.predict(graphs).map_err(|e| e.to_string())?;
    let labels: Vec<bool> = graphs.iter().map(|g| g.label.is_some_and(Label::is_valid)).collect();
    Ok(roc(&scores, &labels).map_err(|e| e.to_string())?.auc)
}

fn context_sensitivity() -> Outcome {
    let start = Instant::now();
    let gen = GenConfig {
        n_projects: 8,
        methods_per_project: 130,
        weights: TemplateWeights { guard_pair: 1.0, numeric: 0.0, role: 0.0 },
        coverage: Coverage::Full,
        seed: 1,
        ..GenConfig::default()
    };
    let projects = generate(&gen).map_err(|e| e.to_string())?;
    let mined = mine(&projects, 1)?;

    // only the mined invariants that state a guard fact; the remaining
    // mined facts about these methods carry no context signal
    let mut per_project = Vec::new();
    let mut disagree = 0;
    for (p, labeled) in projects.iter().zip(&mined) {
        let mut kept = Vec::new();
        for gt in &p.ground_truth {
            if let Some(l) = labeled.iter().find(|l| l.method == gt.method && l.invariant == gt.structured) {
                disagree += usize::from(l.label != gt.label);
                kept.push(l);
            }
        }
        per_project.push(graphs_for(p, &kept)?);
    }
    let total: usize = per_project.iter().map(Vec::len).sum();
    let train_graphs: Vec<MethodGraph> = per_project[..6].concat();
    let test_graphs: Vec<MethodGraph> = per_project[6..].concat();

    let mut aucs = BTreeMap::new();
    for kind in [ModelKind::Ggnn, ModelKind::Nocontext] {
        let mut config = ModelConfig::new(kind);
        config.ggnn.epochs = 3;
        let (model, _) = train(config, &train_graphs, |_, _| Ok(())).map_err(|e| e.to_string())?;
        aucs.insert(kind.to_string(), pooled_auc(&model, &test_graphs)?);
    }
    let elapsed = start.elapsed();
    let (full, plain) = (aucs["ggnn"], aucs["nocontext"]);
    check(
        total >= 2000 && full >= 0.85 && (plain - 0.5).abs() <= 0.05 && elapsed < Duration::from_secs(30 * 60),
        format!(
            "{total} labeled guard invariants ({disagree} disagree with ground truth), train {} / test {}, \
             ggnn auc {full:.4}, no-context auc {plain:.4}",
            train_graphs.len(),
            test_graphs.len()
        ),
    )
}

fn method_auc(model: &Model, graphs: &[MethodGraph]) -> Result<(f64, usize), String> {
    let scores = model.predict(graphs).map_err(|e| e.to_string())?;
    let scored: Vec<Scored> = graphs
        .iter()
        .zip(scores)
        .map(|(g, score)| Scored {
            project: g.project.clone(),
            method: g.method.clone(),
            score,
            valid: g.label.is_some_and(Label::is_valid),
        })
        .collect();
    let e = per_method_eval(&scored);
    Ok((e.mean_auc, e.aucs.len()))
}

fn intra_vs_cross() -> Outcome {
    let gen = GenConfig { n_projects: 4, methods_per_project: 40, seed: 3, ..GenConfig::default() };
    let projects = generate(&gen).map_err(|e| e.to_string())?;
    let mined = mine(&projects, 3)?;
    let test_projects = 2;
    let n_train = projects.len() - test_projects;

    let mut cross_train = Vec::new();
    let mut intra_extra = Vec::new();
    let mut held_out = Vec::new();
    for (i, (p, labeled)) in projects.iter().zip(&mined).enumerate() {
        let all: Vec<&LabeledInvariant> = labeled.iter().collect();
        if i < n_train {
            cross_train.extend(graphs_for(p, &all)?);
            continue;
        }
        // every other method of a test project is held out
        let methods: BTreeSet<&str> = labeled.iter().map(|l| l.method.as_str()).collect();
        let held: BTreeSet<&str> = methods.iter().step_by(2).copied().collect();
        let (h, rest): (Vec<&LabeledInvariant>, Vec<&LabeledInvariant>) =
            all.into_iter().partition(|l| held.contains(l.method.as_str()));
        held_out.extend(graphs_for(p, &h)?);
        intra_extra.extend(graphs_for(p, &rest)?);
    }
    let intra_train: Vec<MethodGraph> = cross_train.iter().chain(&intra_extra).cloned().collect();

    let config = ModelConfig {
        kind: ModelKind::Ggnn,
        ggnn: GgnnConfig { hidden_dim: 32, head_hidden: 32, epochs: 3, seed: 3, ..GgnnConfig::default() },
        rnn: RnnConfig::default(),
    };
    let (intra_model, _) = train(config.clone(), &intra_train, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let (cross_model, _) = train(config, &cross_train, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let (intra, n_methods) = method_auc(&intra_model, &held_out)?;
    let (cross, _) = method_auc(&cross_model, &held_out)?;
    check(
        intra - cross >= 0.05,
        format!(
            "train intra {} / cross {}, {} held-out invariants over {n_methods} methods, \
             per-method auc intra {intra:.4}, cross {cross:.4}, gap {:.1} points",
            intra_train.len(),
            cross_train.len(),
            held_out.len(),
            100.0 * (intra - cross)
        ),
    )
}

const PIPELINE_CONFIG: &str = r#"{
  "seed": 21,
  "generate": { "n_projects": 3, "methods_per_project": 5, "seed": 21 },
  "model": { "kind": "ggnn", "ggnn": { "hidden_dim": 16, "head_hidden": 16, "epochs": 1 } },
  "evaluation": { "holdout_projects": 1 }
}"#;

fn run_forge_pipeline(config: &Path, work: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_forge"))
        .arg("pipeline")
        .arg("--config")
        .arg(config)
        .arg("--work-dir")
        .arg(work)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("forge pipeline failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn pipeline_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("pipeline.json");
    std::fs::write(&config, PIPELINE_CONFIG).map_err(|e| e.to_string())?;
    let runs = [dir.path().join("a"), dir.path().join("b")];
    for w in &runs {
        run_forge_pipeline(&config, w)?;
    }
    let mut detail = Vec::new();
    let mut same = true;
    for file in ["labeled.jsonl", "scores.jsonl"] {
        let a = std::fs::read(runs[0].join(file)).map_err(|e| e.to_string())?;
        let b = std::fs::read(runs[1].join(file)).map_err(|e| e.to_string())?;
        same &= a == b && !a.is_empty();
        detail.push(format!("{file}: {} vs {} bytes, {}", a.len(), b.len(), if a == b { "identical" } else { "different" }));
    }
    check(same, detail.join("; "))
}

fn split_coverage() -> Outcome {
    const PLANS: usize = 1_000_000;
    const TESTS: usize = 100;
    const SPLITS: usize = 100;
    let k = forge_core::labeler::split_size(TESTS, 0.1);
    let never: u64 = (0..PLANS as u64)
        .collect::<Vec<_>>()
        .chunks(10_000)
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(chunk[0]);
            let mut never = 0u64;
            for _ in chunk {
                let mut seen = [false; TESTS];
                for _ in 0..SPLITS {
                    for i in sample_split(&mut rng, TESTS, k) {
                        seen[i] = true;
                    }
                }
                never += seen.iter().filter(|s| !**s).count() as u64;
            }
            never
        })
        .sum();
    let rate = never as f64 / (PLANS * TESTS) as f64;
    let exact = 0.9f64.powi(SPLITS as i32);
    check(
        rate < 3e-5,
        format!("{never} never-selected (test, plan) pairs over {PLANS} plans, rate {rate:.3e} (0.9^100 = {exact:.3e})"),
    )
}
