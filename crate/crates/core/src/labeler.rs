//! Test-suite subsampling and implication-based cross-validation.
//!
//! Each split runs inference on the traces of a random subset of tests. A
//! candidate invariant is supported by a split when something that split
//! inferred implies it; its score is the supported fraction of the splits
//! that observed the method at all.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::invariants::{implies, infer_records, Condition, InferenceConfig, Invariant, InvariantError};
use crate::trace::{compose_view, Point, TraceError, TraceRecord};

pub const DEFAULT_SPLITS: usize = 100;
pub const DEFAULT_FRACTION: f64 = 0.10;
pub const DEFAULT_MIN_SPLITS: usize = 10;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("split fraction must be in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("cannot split an empty test suite")]
    NoTests,
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Inference(#[from] InvariantError),
    #[error("labeled file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub n_splits: usize,
    pub fraction: f64,
    pub seed: u64,
    pub splits: Vec<BTreeSet<String>>,
}

/// Number of tests drawn per split.
pub fn split_size(n_tests: usize, fraction: f64) -> usize {
    // guard against 0.1 * 30 landing a hair above 3
    ((fraction * n_tests as f64 - 1e-9).ceil() as usize).clamp(1, n_tests)
}

/// Draws the test indices of one split.
pub fn sample_split<R: Rng + ?Sized>(rng: &mut R, n_tests: usize, k: usize) -> Vec<usize> {
    let mut picked = index::sample(rng, n_tests, k).into_vec();
    picked.sort_unstable();
    picked
}

pub fn make_splits(
    tests: &BTreeSet<String>,
    n: usize,
    fraction: f64,
    seed: u64,
) -> Result<SplitPlan, LabelError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(LabelError::InvalidFraction(fraction));
    }
    if tests.is_empty() {
        return Err(LabelError::NoTests);
    }
    let names: Vec<&String> = tests.iter().collect();
    let k = split_size(names.len(), fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splits = (0..n)
        .map(|_| {
            sample_split(&mut rng, names.len(), k)
                .into_iter()
                .map(|i| names[i].clone())
                .collect()
        })
        .collect();
    Ok(SplitPlan { n_splits: n, fraction, seed, splits })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Valid,
    Invalid,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Valid => "valid",
            Label::Invalid => "invalid",
        }
    }

    pub fn is_valid(self) -> bool {
        self == Label::Valid
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledInvariant {
    #[serde(default)]
    pub project: String,
    pub method: String,
    pub point: Condition,
    pub rendered: String,
    pub invariant: Invariant,
    pub supporting_splits: usize,
    pub covering_splits: usize,
    pub score: f64,
    pub label: Label,
}

/// Counts from one labeling run. `skipped` lists program points seen by fewer
/// than `min_splits` splits.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LabelSummary {
    pub labeled: usize,
    pub valid: usize,
    pub invalid: usize,
    pub program_points: usize,
    pub skipped: Vec<SkippedPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedPoint {
    pub method: String,
    pub point: Condition,
    pub covering_splits: usize,
}

type PointKey = (String, Condition);

/// Inference results of one split, keyed by the program points it observed.
fn infer_split(
    per_test: &BTreeMap<String, Vec<TraceRecord>>,
    tests: &BTreeSet<String>,
    cfg: &InferenceConfig,
) -> Result<BTreeMap<PointKey, BTreeSet<Invariant>>, LabelError> {
    let records = compose_view(per_test, tests)?;
    let mut by_point: BTreeMap<PointKey, Vec<&TraceRecord>> = BTreeMap::new();
    for r in records {
        let cond = match r.point {
            Point::Entry => Condition::Pre,
            Point::Exit => Condition::Post,
        };
        by_point.entry((r.method.clone(), cond)).or_default().push(r);
    }
    by_point
        .into_iter()
        .map(|((method, cond), recs)| {
            let inferred = infer_records(recs, &method, cond, cfg)?;
            Ok(((method, cond), inferred))
        })
        .collect()
}

pub fn label_corpus(
    per_test: &BTreeMap<String, Vec<TraceRecord>>,
    plan: &SplitPlan,
    cfg: &InferenceConfig,
    min_splits: usize,
) -> Result<(Vec<LabeledInvariant>, LabelSummary), LabelError> {
    cfg.validate()?;
    let per_split: Vec<BTreeMap<PointKey, BTreeSet<Invariant>>> = plan
        .splits
        .par_iter()
        .map(|tests| infer_split(per_test, tests, cfg))
        .collect::<Result<_, _>>()?;

    let mut points: BTreeMap<&PointKey, Vec<&BTreeSet<Invariant>>> = BTreeMap::new();
    for split in &per_split {
        for (key, inferred) in split {
            points.entry(key).or_default().push(inferred);
        }
    }

    let mut out = Vec::new();
    let mut summary = LabelSummary { program_points: points.len(), ..Default::default() };
    for ((method, cond), splits) in points {
        let covering = splits.len();
        if covering < min_splits {
            summary.skipped.push(SkippedPoint {
                method: method.clone(),
                point: *cond,
                covering_splits: covering,
            });
            continue;
        }
        let universe: BTreeSet<&Invariant> = splits.iter().flat_map(|s| s.iter()).collect();
        for inv in universe {
            let supporting = splits
                .iter()
                .filter(|s| s.iter().any(|j| implies(j, inv)))
                .count();
            let score = supporting as f64 / covering as f64;
            let label = if supporting == covering { Label::Valid } else { Label::Invalid };
            out.push(LabeledInvariant {
                project: String::new(),
                method: method.clone(),
                point: *cond,
                rendered: inv.to_string(),
                invariant: inv.clone(),
                supporting_splits: supporting,
                covering_splits: covering,
                score,
                label,
            });
        }
    }
    summary.labeled = out.len();
    summary.valid = out.iter().filter(|l| l.label.is_valid()).count();
    summary.invalid = summary.labeled - summary.valid;
    Ok((out, summary))
}

pub fn write_labeled<'a, W, I>(mut out: W, labeled: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a LabeledInvariant>,
{
    for l in labeled {
        serde_json::to_writer(&mut out, l)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_labeled<R: BufRead>(input: R) -> Result<Vec<LabeledInvariant>, LabelError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let l: LabeledInvariant = serde_json::from_str(&line)
            .map_err(|e| LabelError::Format { line: i + 1, reason: e.to_string() })?;
        out.push(l);
    }
    Ok(out)
}
