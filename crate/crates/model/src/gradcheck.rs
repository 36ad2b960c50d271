//! Central-difference check of the tape's gradients against the loss.

use forge_core::graphs::EncodedGraph;
use serde::Serialize;

use crate::{Model, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    /// Entries whose analytic or numeric gradient exceeded the threshold.
    pub checked: usize,
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
}

/// Compares every parameter entry's analytic gradient with
/// (L(θ + h) − L(θ − h)) / 2h. Entries where both are at most `min_grad` in
/// magnitude are skipped.
pub fn check_gradients(
    model: &Model,
    batch: &[&EncodedGraph],
    h: f64,
    min_grad: f64,
) -> Result<GradCheck, ModelError> {
    let (_, grads) = model.loss_and_grads(batch)?;
    let mut probe = model.clone();
    let mut report = GradCheck { checked: 0, max_rel_err: 0.0, worst: None };
    for (p, grad) in grads.iter().enumerate() {
        for (flat, &analytic) in grad.iter().enumerate() {
            let original = model.params.tensors[p].as_slice().expect("standard layout")[flat];
            let entry = |m: &mut Model, v: f64| m.params.tensors[p].as_slice_mut().expect("standard layout")[flat] = v;
            entry(&mut probe, original + h);
            let up = probe.loss(batch)?;
            entry(&mut probe, original - h);
            let down = probe.loss(batch)?;
            entry(&mut probe, original);
            let numeric = (up - down) / (2.0 * h);
            if analytic.abs() <= min_grad && numeric.abs() <= min_grad {
                continue;
            }
            report.checked += 1;
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((model.params.names[p].clone(), flat));
            }
        }
    }
    Ok(report)
}
