mod common;

use forge_model::{train, ModelError, ModelKind};

#[test]
fn first_epoch_lowers_the_loss() {
    let graphs = common::corpus_graphs(2, 30, 21);
    assert!(graphs.len() >= 100, "{} graphs", graphs.len());
    for kind in [ModelKind::Ggnn, ModelKind::Nocontext, ModelKind::Rnn] {
        let mut config = common::small_config(kind, 0);
        config.ggnn.hidden_dim = 16;
        config.ggnn.head_hidden = 16;
        config.ggnn.epochs = 1;
        config.ggnn.batch_token_budget = if kind == ModelKind::Nocontext { 100 } else { 600 };
        config.rnn.epochs = 1;
        config.rnn.batch_token_budget = 200;
        let (_, report) = train(config, &graphs, |_, _| Ok(())).unwrap();
        assert!(report.epochs[0].batches > 1);
        assert!(
            report.epochs[0].end_loss < report.step0_loss,
            "{kind}: {} -> {}",
            report.step0_loss,
            report.epochs[0].end_loss
        );
    }
}

#[test]
fn training_is_deterministic_and_checkpoints_each_epoch() {
    let graphs = common::corpus_graphs(1, 10, 22);
    let mut config = common::small_config(ModelKind::Ggnn, 7);
    config.ggnn.epochs = 3;
    config.ggnn.batch_token_budget = 500;
    let mut seen = Vec::new();
    let (a, ra) = train(config.clone(), &graphs, |m, r| {
        assert_eq!(m.epoch, r.epoch);
        seen.push(r.epoch);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![1, 2, 3]);
    let (b, rb) = train(config.clone(), &graphs, |_, _| Ok(())).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);

    config.ggnn.seed = 8;
    let (c, _) = train(config, &graphs, |_, _| Ok(())).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn unlabeled_or_empty_input_is_rejected() {
    let mut graphs = common::corpus_graphs(1, 4, 23);
    let config = common::small_config(ModelKind::Ggnn, 0);
    assert!(matches!(train(config.clone(), &[], |_, _| Ok(())), Err(ModelError::NoData)));
    graphs[1].label = None;
    assert!(matches!(train(config, &graphs, |_, _| Ok(())), Err(ModelError::MissingLabel(1))));
}

#[test]
fn divergence_reports_last_good_epoch() {
    let graphs = common::corpus_graphs(1, 6, 24);
    let mut config = common::small_config(ModelKind::Ggnn, 0);
    config.ggnn.epochs = 2;
    // A learning rate this large overflows the parameters in the second epoch.
    config.ggnn.learning_rate = 1e300;
    match train(config, &graphs, |_, _| Ok(())) {
        Err(ModelError::Divergence { epoch, last_good, .. }) => {
            if epoch > 1 {
                assert_eq!(last_good.unwrap().epoch, epoch - 1);
            } else {
                assert!(last_good.is_none());
            }
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}
