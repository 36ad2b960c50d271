use forge_core::metrics::{partial_auc, per_project_eval, roc, Scored};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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

proptest! {
    #[test]
    fn auc_equals_pairwise_statistic(
        data in prop::collection::vec((0u8..12, any::<bool>()), 2..200)
    ) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 11.0).collect();
        let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let c = roc(&scores, &labels).unwrap();
        prop_assert!((c.auc - mann_whitney(&scores, &labels)).abs() < 1e-9);
        for w in c.points.windows(2) {
            prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert_eq!(&roc(&squashed, &labels).unwrap(), &c);
        let mut last = 0.0;
        for k in 1..=20 {
            let p = partial_auc(&c, k as f64 / 20.0);
            prop_assert!(p >= last - 1e-15);
            last = p;
        }
        prop_assert!((last - c.auc).abs() < 1e-12);
    }
}

#[test]
fn random_scores_give_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 10_000;
    let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    let c = roc(&scores, &labels).unwrap();
    assert!((c.auc - 0.5).abs() < 0.02, "{}", c.auc);
    let scored: Vec<Scored> = scores
        .iter()
        .zip(&labels)
        .map(|(&score, &valid)| Scored { project: "p".into(), method: "m".into(), score, valid })
        .collect();
    assert!((per_project_eval(&scored)["p"].auc - 0.5).abs() < 0.02);
}
