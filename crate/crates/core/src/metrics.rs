//! ROC curves, partial AUC, and per-method / per-project evaluation.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeler::{Label, LabeledInvariant};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("ROC needs both classes; got {positives} positives and {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score {0} is not finite")]
    NonFinite(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    /// (fpr, tpr) from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Threshold sweep over distinct scores, highest first. A group of tied
/// scores contributes a single diagonal segment.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(&bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(bad));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClass { positives, negatives });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    let auc = area(&points);
    Ok(RocCurve { points, auc })
}

fn area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Area under the curve for fpr in [0, max_fpr], interpolating at the cut.
pub fn partial_auc(curve: &RocCurve, max_fpr: f64) -> f64 {
    let mut clipped = Vec::with_capacity(curve.points.len());
    for w in curve.points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if clipped.is_empty() {
            clipped.push((x0, y0));
        }
        if x1 <= max_fpr {
            clipped.push((x1, y1));
            continue;
        }
        if x0 < max_fpr {
            let t = (max_fpr - x0) / (x1 - x0);
            clipped.push((max_fpr, y0 + t * (y1 - y0)));
        }
        break;
    }
    area(&clipped)
}

/// One scored candidate as written by `rank`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub project: String,
    pub method: String,
    pub invariant: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub project: String,
    pub method: String,
    pub score: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodEval {
    /// Unweighted mean over methods having both classes; NaN when none do.
    pub mean_auc: f64,
    /// AUC per (project, method).
    pub aucs: BTreeMap<(String, String), f64>,
    pub excluded: usize,
}

pub fn per_method_eval(scored: &[Scored]) -> MethodEval {
    let mut groups: BTreeMap<(String, String), (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for s in scored {
        let g = groups.entry((s.project.clone(), s.method.clone())).or_default();
        g.0.push(s.score);
        g.1.push(s.valid);
    }
    let mut aucs = BTreeMap::new();
    let mut excluded = 0;
    for (key, (scores, labels)) in groups {
        match roc(&scores, &labels) {
            Ok(c) => {
                aucs.insert(key, c.auc);
            }
            Err(_) => excluded += 1,
        }
    }
    let mean_auc = if aucs.is_empty() {
        f64::NAN
    } else {
        aucs.values().sum::<f64>() / aucs.len() as f64
    };
    MethodEval { mean_auc, aucs, excluded }
}

/// One pooled curve per project; single-class projects are left out.
pub fn per_project_eval(scored: &[Scored]) -> BTreeMap<String, RocCurve> {
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for s in scored {
        let g = groups.entry(&s.project).or_default();
        g.0.push(s.score);
        g.1.push(s.valid);
    }
    groups
        .into_iter()
        .filter_map(|(p, (scores, labels))| roc(&scores, &labels).ok().map(|c| (p.to_string(), c)))
        .collect()
}

/// A manual annotation of an external golden set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldenLabel {
    Valid,
    Invalid,
    Irrelevant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenRecord {
    #[serde(default)]
    pub project: String,
    pub method: String,
    pub invariant: String,
    pub label: GoldenLabel,
}

type Key = (String, String, String);

fn key(project: &str, method: &str, invariant: &str) -> Key {
    (project.to_string(), method.to_string(), invariant.to_string())
}

/// Joins scores with mined labels. Scores without a label are dropped.
pub fn join_labeled(scores: &[ScoreRecord], labeled: &[LabeledInvariant]) -> Vec<Scored> {
    let labels: BTreeMap<Key, bool> = labeled
        .iter()
        .map(|l| (key(&l.project, &l.method, &l.rendered), l.label.is_valid()))
        .collect();
    join(scores, &labels)
}

/// Joins scores with golden annotations; `irrelevant` entries are skipped.
pub fn join_golden(scores: &[ScoreRecord], golden: &[GoldenRecord]) -> Vec<Scored> {
    let labels: BTreeMap<Key, bool> = golden
        .iter()
        .filter(|g| g.label != GoldenLabel::Irrelevant)
        .map(|g| (key(&g.project, &g.method, &g.invariant), g.label == GoldenLabel::Valid))
        .collect();
    join(scores, &labels)
}

fn join(scores: &[ScoreRecord], labels: &BTreeMap<Key, bool>) -> Vec<Scored> {
    scores
        .iter()
        .filter_map(|s| {
            let valid = *labels.get(&key(&s.project, &s.method, &s.invariant))?;
            Some(Scored { project: s.project.clone(), method: s.method.clone(), score: s.score, valid })
        })
        .collect()
}

pub fn write_roc_csv<W: Write>(mut out: W, curve: &RocCurve) -> std::io::Result<()> {
    writeln!(out, "fpr,tpr")?;
    for (x, y) in &curve.points {
        writeln!(out, "{x},{y}")?;
    }
    Ok(())
}

pub fn write_jsonl<'a, T, W, I>(mut out: W, items: I) -> std::io::Result<()>
where
    T: Serialize + 'a,
    W: Write,
    I: IntoIterator<Item = &'a T>,
{
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads line-delimited JSON, reporting the first bad line.
pub fn read_jsonl<T, R>(input: R) -> Result<Vec<T>, String>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let c = roc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap();
        assert_eq!(c.auc, 1.0);
        assert_eq!(c.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(c.points.last(), Some(&(1.0, 1.0)));
        assert_eq!(partial_auc(&c, 0.25), 0.25);
    }

    #[test]
    fn all_tied_is_one_diagonal() {
        let c = roc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(c.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(c.auc, 0.5);
        assert_eq!(partial_auc(&c, 0.25), 0.03125);
        assert_eq!(partial_auc(&c, 1.0), c.auc);
    }

    #[test]
    fn errors() {
        assert_eq!(
            roc(&[0.1, 0.2], &[true, true]),
            Err(MetricsError::SingleClass { positives: 2, negatives: 0 })
        );
        assert!(matches!(roc(&[0.1], &[true, false]), Err(MetricsError::LengthMismatch { .. })));
        assert!(matches!(roc(&[f64::NAN, 0.1], &[true, false]), Err(MetricsError::NonFinite(_))));
    }

    #[test]
    fn per_method_skips_single_class() {
        let s = |m: &str, score, valid| Scored { project: "p".into(), method: m.into(), score, valid };
        let e = per_method_eval(&[
            s("a", 0.9, true),
            s("a", 0.1, false),
            s("b", 0.5, false),
            s("b", 0.7, false),
        ]);
        assert_eq!(e.mean_auc, 1.0);
        assert_eq!(e.aucs.len(), 1);
        assert_eq!(e.excluded, 1);
    }

    #[test]
    fn golden_join_drops_irrelevant() {
        let scores = vec![
            ScoreRecord { project: "p".into(), method: "m".into(), invariant: "pre m: x >= 0".into(), score: 0.7, label: None },
            ScoreRecord { project: "p".into(), method: "m".into(), invariant: "pre m: x != null".into(), score: 0.2, label: None },
        ];
        let golden = vec![
            GoldenRecord { project: "p".into(), method: "m".into(), invariant: "pre m: x >= 0".into(), label: GoldenLabel::Valid },
            GoldenRecord { project: "p".into(), method: "m".into(), invariant: "pre m: x != null".into(), label: GoldenLabel::Irrelevant },
        ];
        let joined = join_golden(&scores, &golden);
        assert_eq!(joined.len(), 1);
        assert!(joined[0].valid);
    }

    #[test]
    fn csv_layout() {
        let c = roc(&[0.9, 0.1], &[true, false]).unwrap();
        let mut buf = Vec::new();
        write_roc_csv(&mut buf, &c).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "fpr,tpr\n0,0\n0,1\n1,1\n");
    }
}
