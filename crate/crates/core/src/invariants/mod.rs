//! Invariant grammar over trace snapshots: evaluation, the single-premise
//! implication lattice, candidate enumeration and strongest-only inference.

mod eval;
mod infer;
mod lattice;
mod schema;
mod text;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::Point;

pub use eval::{evaluate, evaluate_checked, resolve, Num, Resolved};
pub use infer::{infer, infer_records, InferenceConfig};
pub use lattice::{elem_implies, implies, strongest};
pub use schema::{enumerate_candidates, terms_of, MethodSchema, PathInfo, TermClass};
pub use text::parse_invariant;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InvariantError {
    #[error("term `{0}` never occurs for this method")]
    UnresolvableTerm(String),
    #[error("no observations for {method} at {point}")]
    NoObservations { method: String, point: Condition },
    #[error("invalid inference config: {0}")]
    InvalidConfig(String),
    #[error("cannot parse invariant `{text}`: {reason}")]
    Parse { text: String, reason: String },
}

/// The common-number pool bounds and equalities are drawn from:
/// `{-1, 0, 1} ∪ {2^n, 2^n - 1 : 4 <= n <= 30} ∪ {10^n : 2 <= n <= 9}`.
pub struct ConstantPool;

impl ConstantPool {
    pub fn values() -> &'static [i64] {
        static POOL: std::sync::OnceLock<Vec<i64>> = std::sync::OnceLock::new();
        POOL.get_or_init(|| {
            let mut v = vec![-1, 0, 1];
            for n in 4..=30 {
                v.push(1i64 << n);
                v.push((1i64 << n) - 1);
            }
            for n in 2..=9 {
                v.push(10i64.pow(n));
            }
            v.sort_unstable();
            v.dedup();
            v
        })
    }

    pub fn contains(c: i64) -> bool {
        Self::values().binary_search(&c).is_ok()
    }

    /// Largest pool constant `<= x`.
    pub fn floor(x: f64) -> Option<i64> {
        Self::values().iter().rev().copied().find(|&c| c as f64 <= x)
    }

    /// Smallest pool constant `>= x`.
    pub fn ceil(x: f64) -> Option<i64> {
        Self::values().iter().copied().find(|&c| c as f64 >= x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Pre,
    Post,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Pre => "pre",
            Condition::Post => "post",
        }
    }

    pub fn point(self) -> Point {
        match self {
            Condition::Pre => Point::Entry,
            Condition::Post => Point::Exit,
        }
    }
}

impl From<Point> for Condition {
    fn from(p: Point) -> Self {
        match p {
            Point::Entry => Condition::Pre,
            Point::Exit => Condition::Post,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Var(String),
    /// Length of the array at a record path.
    Len(String),
    /// Pre-state value, legal only in post-conditions.
    Orig(Box<Term>),
    Return,
}

impl Term {
    pub fn var(path: impl Into<String>) -> Self {
        Term::Var(path.into())
    }

    pub fn orig(inner: Term) -> Self {
        Term::Orig(Box::new(inner))
    }

    /// The record path whose snapshot this term reads.
    pub fn record_path(&self) -> Option<String> {
        match self {
            Term::Var(p) | Term::Len(p) => Some(p.clone()),
            Term::Return => Some("return".into()),
            Term::Orig(inner) => match inner.as_ref() {
                Term::Var(p) | Term::Len(p) => Some(crate::trace::orig_path(p)),
                _ => None,
            },
        }
    }

    pub fn is_len(&self) -> bool {
        match self {
            Term::Len(_) => true,
            Term::Orig(inner) => inner.is_len(),
            _ => false,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(p) => f.write_str(p),
            Term::Len(p) => write!(f, "len({p})"),
            Term::Orig(t) => write!(f, "orig({t})"),
            Term::Return => f.write_str("return"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl RelOp {
    pub const ALL: [RelOp; 5] = [RelOp::Eq, RelOp::Lt, RelOp::Le, RelOp::Gt, RelOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Eq => "==",
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
        }
    }

    pub fn holds(self, o: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            RelOp::Eq => o == Equal,
            RelOp::Lt => o == Less,
            RelOp::Le => o != Greater,
            RelOp::Gt => o == Greater,
            RelOp::Ge => o != Less,
        }
    }
}

/// Predicate applied to every element of an array.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElemPredicate {
    NotNull,
    StrEq(String),
    NumEq(i64),
    NumGe(i64),
    NumLe(i64),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    IsNull(Term),
    NotNull(Term),
    StrEq(Term, String),
    NumEq(Term, i64),
    NumGe(Term, i64),
    NumLe(Term, i64),
    AllElems(Term, ElemPredicate),
    AnyElemNull(Term),
    RefEq(Term, Term),
    /// `Contains(element, array)`: the object occurs in the array.
    Contains(Term, Term),
    Rel(Term, RelOp, Term),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Invariant {
    pub method: String,
    pub point: Condition,
    pub predicate: Predicate,
}

impl Invariant {
    pub fn new(method: impl Into<String>, point: Condition, predicate: Predicate) -> Self {
        Invariant { method: method.into(), point, predicate }
    }

    pub fn terms(&self) -> Vec<&Term> {
        use Predicate::*;
        match &self.predicate {
            IsNull(t) | NotNull(t) | StrEq(t, _) | NumEq(t, _) | NumGe(t, _) | NumLe(t, _)
            | AllElems(t, _) | AnyElemNull(t) => vec![t],
            RefEq(a, b) | Contains(a, b) | Rel(a, _, b) => vec![a, b],
        }
    }

    /// Rendered predicate without the `pre method:` prefix.
    pub fn expression(&self) -> String {
        use Predicate::*;
        match &self.predicate {
            IsNull(t) => format!("{t} == null"),
            NotNull(t) => format!("{t} != null"),
            StrEq(t, s) => format!("{t} == {}", quote(s)),
            NumEq(t, c) => format!("{t} == {c}"),
            NumGe(t, c) => format!("{t} >= {c}"),
            NumLe(t, c) => format!("{t} <= {c}"),
            AllElems(a, p) => {
                let body = match p {
                    ElemPredicate::NotNull => "elem != null".to_string(),
                    ElemPredicate::StrEq(s) => format!("elem == {}", quote(s)),
                    ElemPredicate::NumEq(c) => format!("elem == {c}"),
                    ElemPredicate::NumGe(c) => format!("elem >= {c}"),
                    ElemPredicate::NumLe(c) => format!("elem <= {c}"),
                };
                format!("forall({a}, {body})")
            }
            AnyElemNull(a) => format!("exists({a}, elem == null)"),
            RefEq(a, b) => format!("same({a}, {b})"),
            Contains(t, a) => format!("contains({a}, {t})"),
            Rel(a, op, b) => format!("{a} {} {b}", op.symbol()),
        }
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.point, self.method, self.expression())
    }
}

/// One line of an invariant file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantRecord {
    pub method: String,
    pub point: Condition,
    pub rendered: String,
    pub invariant: Invariant,
}

impl From<&Invariant> for InvariantRecord {
    fn from(inv: &Invariant) -> Self {
        InvariantRecord {
            method: inv.method.clone(),
            point: inv.point,
            rendered: inv.to_string(),
            invariant: inv.clone(),
        }
    }
}
