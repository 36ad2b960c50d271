mod common;

use forge_core::graphs::EncodedGraph;
use forge_model::gradcheck::check_gradients;
use forge_model::ModelKind;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(kind: ModelKind) {
    let graphs = common::corpus_graphs(2, 6, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(kind as u64);
    for trial in 0..3 {
        let picked: Vec<_> = graphs.choose_multiple(&mut rng, 3).cloned().collect();
        let mut model = common::fresh_model(common::small_config(kind, trial), &picked);
        // Move off the zero-bias start so every path carries gradient.
        for t in &mut model.params.tensors {
            t.mapv_inplace(|x| x + rng.random_range(-0.2..0.2));
        }
        let encoded: Vec<EncodedGraph> = picked.iter().map(|g| model.encode(g).unwrap()).collect();
        let refs: Vec<&EncodedGraph> = encoded.iter().collect();
        let report = check_gradients(&model, &refs, 1e-4, 1e-6).unwrap();
        assert!(report.checked > 100, "{kind}: only {} entries checked", report.checked);
        assert!(
            report.max_rel_err < 1e-4,
            "{kind} trial {trial}: relative error {} at {:?}",
            report.max_rel_err,
            report.worst
        );
    }
}

#[test]
fn ggnn_gradients_match_finite_differences() {
    check(ModelKind::Ggnn);
}

#[test]
fn nocontext_gradients_match_finite_differences() {
    check(ModelKind::Nocontext);
}

#[test]
fn rnn_gradients_match_finite_differences() {
    check(ModelKind::Rnn);
}
