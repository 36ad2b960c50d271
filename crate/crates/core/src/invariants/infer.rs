use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::eval::{elem_holds, resolve, Num, Resolved};
use super::schema::ElemClass;
use super::{
    strongest, terms_of, Condition, ConstantPool, ElemPredicate, Invariant, InvariantError,
    MethodSchema, Predicate, RelOp, Term, TermClass,
};
use crate::trace::{Elem, SnapValue, SplitTraces, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Minimum number of records at a program point before anything is inferred.
    pub min_support: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig { min_support: 5 }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), InvariantError> {
        if self.min_support == 0 {
            return Err(InvariantError::InvalidConfig("min_support must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn infer(
    traces: &SplitTraces,
    method: &str,
    point: Condition,
    cfg: &InferenceConfig,
) -> Result<BTreeSet<Invariant>, InvariantError> {
    infer_records(traces.records.iter(), method, point, cfg)
}

/// Strongest invariants from the candidate universe that hold on every record
/// of `(method, point)`.
///
/// Works from per-term summaries (extrema, nullity, equalities) rather than
/// evaluating every candidate, then reduces with the implication lattice.
pub fn infer_records<'a, I>(
    records: I,
    method: &str,
    point: Condition,
    cfg: &InferenceConfig,
) -> Result<BTreeSet<Invariant>, InvariantError>
where
    I: IntoIterator<Item = &'a TraceRecord>,
{
    cfg.validate()?;
    let records: Vec<&TraceRecord> = records
        .into_iter()
        .filter(|r| r.method == method && r.point == point.point())
        .collect();
    if records.is_empty() {
        return Err(InvariantError::NoObservations { method: method.to_string(), point });
    }
    if records.len() < cfg.min_support {
        return Ok(BTreeSet::new());
    }

    let schema = MethodSchema::from_records(method, point, records.iter().copied());
    let terms = terms_of(&schema);
    let columns: Vec<Vec<Option<Resolved<'_>>>> = terms
        .iter()
        .map(|(t, _, _)| records.iter().map(|r| resolve(t, r)).collect())
        .collect();

    let mut holding = Vec::new();
    for ((term, class, info), column) in terms.iter().zip(&columns) {
        match class {
            TermClass::Numeric => numeric_bounds(term, column, &mut holding),
            TermClass::NullOnly | TermClass::Object => nullity(term, column, &mut holding),
            TermClass::String => {
                nullity(term, column, &mut holding);
                let first = match column[0] {
                    Some(Resolved::Value(SnapValue::Str(s))) => Some(s),
                    _ => None,
                };
                if let Some(s) = first {
                    let all_same = column
                        .iter()
                        .all(|r| matches!(r, Some(Resolved::Value(SnapValue::Str(x))) if x == s));
                    if all_same {
                        holding.push(Predicate::StrEq(term.clone(), s.clone()));
                    }
                }
            }
            TermClass::Array => {
                nullity(term, column, &mut holding);
                let arrays: Option<Vec<&[Elem]>> = column
                    .iter()
                    .map(|r| match r {
                        Some(Resolved::Value(SnapValue::Array { elems, .. })) => Some(elems.as_slice()),
                        _ => None,
                    })
                    .collect();
                if let Some(arrays) = arrays {
                    element_facts(term, info.elem_class(), &info.elem_strings, &arrays, &mut holding);
                }
            }
            TermClass::Mixed => {}
        }
    }

    for (i, (a, ca, _)) in terms.iter().enumerate() {
        for (j, (b, cb, _)) in terms.iter().enumerate().skip(i + 1) {
            match (ca, cb) {
                (TermClass::Numeric, TermClass::Numeric) => {
                    relations(a, b, &columns[i], &columns[j], &mut holding)
                }
                (TermClass::Object, TermClass::Object) | (TermClass::Array, TermClass::Array) => {
                    let same = columns[i].iter().zip(&columns[j]).all(|(x, y)| {
                        matches!((identity(*x), identity(*y)), (Some(p), Some(q)) if p == q)
                    });
                    if same {
                        holding.push(Predicate::RefEq(a.clone(), b.clone()));
                    }
                }
                _ => {}
            }
        }
    }

    for (i, (t, ct, _)) in terms.iter().enumerate() {
        if *ct != TermClass::Object {
            continue;
        }
        for (j, (a, ca, info)) in terms.iter().enumerate() {
            let object_elems = *ca == TermClass::Array
                && info.elem_class() == ElemClass::Reference
                && info.elem_kinds.contains(&crate::trace::ValueKind::Object);
            if !object_elems {
                continue;
            }
            let contained = columns[i].iter().zip(&columns[j]).all(|(x, arr)| match (x, arr) {
                (
                    Some(Resolved::Value(SnapValue::Object(id))),
                    Some(Resolved::Value(SnapValue::Array { elems, .. })),
                ) => elems.iter().any(|e| matches!(e, Elem::Object(o) if o == id)),
                _ => false,
            });
            if contained {
                holding.push(Predicate::Contains(t.clone(), a.clone()));
            }
        }
    }

    let set: BTreeSet<Invariant> = holding
        .into_iter()
        .map(|p| Invariant::new(method, point, p))
        .collect();
    Ok(strongest(set))
}

fn identity(r: Option<Resolved<'_>>) -> Option<(bool, u64)> {
    match r? {
        Resolved::Value(SnapValue::Object(id)) => Some((false, *id)),
        Resolved::Value(SnapValue::Array { id, .. }) => Some((true, *id)),
        _ => None,
    }
}

fn nullity(term: &Term, column: &[Option<Resolved<'_>>], out: &mut Vec<Predicate>) {
    if column.iter().all(|r| r.is_some_and(Resolved::is_null)) {
        out.push(Predicate::IsNull(term.clone()));
    }
    if column.iter().all(|r| r.is_some_and(|r| !r.is_null())) {
        out.push(Predicate::NotNull(term.clone()));
    }
}

/// Extrema of a numeric sample; `None` if any value is missing or NaN.
fn extrema(values: impl Iterator<Item = Option<Num>>) -> Option<Option<(f64, f64)>> {
    let mut range: Option<(f64, f64)> = None;
    for v in values {
        let x = v?.as_f64();
        if x.is_nan() {
            return None;
        }
        range = Some(match range {
            None => (x, x),
            Some((lo, hi)) => (lo.min(x), hi.max(x)),
        });
    }
    Some(range)
}

/// Comparisons against pool constants are exact through `f64`: every pool
/// constant is representable, and integer-to-float rounding is monotone.
fn bounds(lo: f64, hi: f64) -> Vec<BoundFact> {
    if lo == hi {
        if let Some(c) = ConstantPool::values().iter().copied().find(|&c| c as f64 == lo) {
            return vec![BoundFact::Eq(c)];
        }
    }
    let mut out = Vec::new();
    if let Some(c) = ConstantPool::floor(lo) {
        out.push(BoundFact::Ge(c));
    }
    if let Some(c) = ConstantPool::ceil(hi) {
        out.push(BoundFact::Le(c));
    }
    out
}

enum BoundFact {
    Eq(i64),
    Ge(i64),
    Le(i64),
}

fn numeric_bounds(term: &Term, column: &[Option<Resolved<'_>>], out: &mut Vec<Predicate>) {
    let Some(Some((lo, hi))) = extrema(column.iter().map(|r| r.and_then(Resolved::num))) else {
        return;
    };
    for fact in bounds(lo, hi) {
        out.push(match fact {
            BoundFact::Eq(c) => Predicate::NumEq(term.clone(), c),
            BoundFact::Ge(c) => Predicate::NumGe(term.clone(), c),
            BoundFact::Le(c) => Predicate::NumLe(term.clone(), c),
        });
    }
}

fn element_facts(
    term: &Term,
    class: ElemClass,
    observed_strings: &BTreeSet<String>,
    arrays: &[&[Elem]],
    out: &mut Vec<Predicate>,
) {
    let elems = || arrays.iter().flat_map(|a| a.iter());
    let all = |p: ElemPredicate| Predicate::AllElems(term.clone(), p);
    match class {
        ElemClass::Numeric => {
            let nums = elems().map(|e| match e {
                Elem::Int(i) => Some(Num::Int(*i)),
                Elem::Float(f) => Some(Num::Float(*f)),
                _ => None,
            });
            if let Some(range) = extrema(nums) {
                match range {
                    Some((lo, hi)) => {
                        for fact in bounds(lo, hi) {
                            out.push(all(match fact {
                                BoundFact::Eq(c) => ElemPredicate::NumEq(c),
                                BoundFact::Ge(c) => ElemPredicate::NumGe(c),
                                BoundFact::Le(c) => ElemPredicate::NumLe(c),
                            }));
                        }
                    }
                    // every array empty: all element candidates hold vacuously
                    None => {
                        for &c in ConstantPool::values() {
                            out.push(all(ElemPredicate::NumEq(c)));
                        }
                    }
                }
            }
        }
        ElemClass::String | ElemClass::Reference | ElemClass::NullOnly => {
            if elems().all(|e| elem_holds(&ElemPredicate::NotNull, e)) {
                out.push(all(ElemPredicate::NotNull));
            }
            if class == ElemClass::String {
                for s in observed_strings {
                    let p = ElemPredicate::StrEq(s.clone());
                    if elems().all(|e| elem_holds(&p, e)) {
                        out.push(all(p));
                    }
                }
            }
            if arrays.iter().all(|a| a.iter().any(|e| matches!(e, Elem::Null))) {
                out.push(Predicate::AnyElemNull(term.clone()));
            }
        }
        ElemClass::Empty | ElemClass::Mixed => {}
    }
}

fn relations(
    a: &Term,
    b: &Term,
    xs: &[Option<Resolved<'_>>],
    ys: &[Option<Resolved<'_>>],
    out: &mut Vec<Predicate>,
) {
    let mut hold = [true; 5];
    for (x, y) in xs.iter().zip(ys) {
        let ord = match (x.and_then(Resolved::num), y.and_then(Resolved::num)) {
            (Some(x), Some(y)) => x.compare(y),
            _ => None,
        };
        for (k, op) in RelOp::ALL.iter().enumerate() {
            hold[k] &= ord.is_some_and(|o| op.holds(o));
        }
        if !hold.iter().any(|h| *h) {
            return;
        }
    }
    for (k, op) in RelOp::ALL.iter().enumerate() {
        if hold[k] {
            out.push(Predicate::Rel(a.clone(), *op, b.clone()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Point, ValueSnapshot};

    fn entries(values: &[i64]) -> Vec<TraceRecord> {
        values
            .iter()
            .enumerate()
            .map(|(k, v)| TraceRecord {
                test: "t".into(),
                method: "m".into(),
                point: Point::Entry,
                call_index: k as u64 + 1,
                vars: vec![ValueSnapshot::new("v", SnapValue::Int(*v))],
            })
            .collect()
    }

    fn render(set: &BTreeSet<Invariant>) -> Vec<String> {
        set.iter().map(|i| i.expression()).collect()
    }

    #[test]
    fn sparsity_equality_artifact() {
        let recs = entries(&[0; 6]);
        let got = infer_records(&recs, "m", Condition::Pre, &InferenceConfig::default()).unwrap();
        assert_eq!(render(&got), ["v == 0"]);
    }

    #[test]
    fn bounds_snap_to_pool() {
        let recs = entries(&[3, 1, 900]);
        let cfg = InferenceConfig { min_support: 1 };
        let got = infer_records(&recs, "m", Condition::Pre, &cfg).unwrap();
        assert_eq!(render(&got), ["v >= 1", "v <= 1000"]);
    }

    #[test]
    fn below_support_is_empty() {
        let recs = entries(&[-5]);
        let got = infer_records(&recs, "m", Condition::Pre, &InferenceConfig::default()).unwrap();
        assert!(got.is_empty());
    }

    #[test]
    fn no_observations() {
        let recs = entries(&[1]);
        let err = infer_records(&recs, "other", Condition::Pre, &InferenceConfig::default());
        assert!(matches!(err, Err(InvariantError::NoObservations { .. })));
        let err = infer_records(&recs, "m", Condition::Post, &InferenceConfig::default());
        assert!(matches!(err, Err(InvariantError::NoObservations { .. })));
    }

    #[test]
    fn zero_support_rejected() {
        let recs = entries(&[1]);
        let cfg = InferenceConfig { min_support: 0 };
        assert!(matches!(
            infer_records(&recs, "m", Condition::Pre, &cfg),
            Err(InvariantError::InvalidConfig(_))
        ));
    }

    #[test]
    fn out_of_pool_extremes() {
        let recs = entries(&[-7, i64::MAX]);
        let cfg = InferenceConfig { min_support: 1 };
        assert!(infer_records(&recs, "m", Condition::Pre, &cfg).unwrap().is_empty());
    }

    #[test]
    fn abs_post_conditions() {
        let recs: Vec<TraceRecord> = [-3i64, 0, 4, 9, -12]
            .iter()
            .map(|&v| TraceRecord {
                test: "t".into(),
                method: "abs".into(),
                point: Point::Exit,
                call_index: 1,
                vars: vec![
                    ValueSnapshot::new("val", SnapValue::Int(v)),
                    ValueSnapshot::new("orig(val)", SnapValue::Int(v)),
                    ValueSnapshot::new("return", SnapValue::Int(v.abs())),
                ],
            })
            .collect();
        let got = infer_records(&recs, "abs", Condition::Post, &InferenceConfig::default()).unwrap();
        let r = render(&got);
        assert!(r.contains(&"return >= 0".to_string()), "{r:?}");
        assert!(r.contains(&"orig(val) == val".to_string()), "{r:?}");
        assert!(r.contains(&"orig(val) <= return".to_string()), "{r:?}");
        assert!(!r.contains(&"orig(val) <= val".to_string()));
    }
}
