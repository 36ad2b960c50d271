use std::collections::BTreeMap;

use forge_core::corpusgen::{generate, Coverage, GenConfig, TemplateWeights};
use forge_core::invariants::{evaluate, InferenceConfig};
use forge_core::labeler::{label_corpus, make_splits, Label};
use forge_core::minilang::{run_tests, PerTestSink};

fn traces(p: &forge_core::corpusgen::GeneratedProject) -> BTreeMap<String, Vec<forge_core::trace::TraceRecord>> {
    let program = p.program().unwrap();
    let mut sink = PerTestSink::default();
    let report = run_tests(&program, &program.tests(), &mut sink, 17).unwrap();
    assert_eq!(report.passed(), report.tests.len());
    sink.traces
}

#[test]
fn valid_ground_truth_holds_on_full_suite() {
    let cfg = GenConfig { n_projects: 4, methods_per_project: 30, seed: 2, ..GenConfig::default() };
    for p in generate(&cfg).unwrap() {
        let per_test = traces(&p);
        for gt in p.ground_truth.iter().filter(|g| g.label == Label::Valid) {
            let inv = &gt.structured;
            let recs: Vec<_> = per_test
                .values()
                .flatten()
                .filter(|r| r.method == inv.method && r.point == inv.point.point())
                .collect();
            assert!(!recs.is_empty(), "{}", gt.invariant);
            assert!(recs.iter().all(|r| evaluate(inv, r)), "{} fails", gt.invariant);
        }
    }
}

#[test]
fn mined_labels_agree_with_guard_and_role_truth() {
    let cfg = GenConfig {
        n_projects: 2,
        methods_per_project: 60,
        weights: TemplateWeights { guard_pair: 1.0, numeric: 0.0, role: 1.0 },
        coverage: Coverage::Full,
        seed: 4,
        ..GenConfig::default()
    };
    for p in generate(&cfg).unwrap() {
        let per_test = traces(&p);
        let tests = per_test.keys().cloned().collect();
        let plan = make_splits(&tests, 100, 0.1, 1).unwrap();
        let (labeled, _) = label_corpus(&per_test, &plan, &InferenceConfig::default(), 10).unwrap();
        let mut matched = 0;
        for gt in &p.ground_truth {
            let l = labeled
                .iter()
                .find(|l| l.invariant == gt.structured)
                .unwrap_or_else(|| panic!("{} not labeled", gt.invariant));
            assert_eq!(l.label, gt.label, "{} score {}", gt.invariant, l.score);
            matched += 1;
        }
        assert_eq!(matched, p.ground_truth.len());
    }
}
