use std::cmp::Ordering;

use super::{ElemPredicate, Invariant, InvariantError, MethodSchema, Predicate, Term};
use crate::trace::{Elem, SnapValue, TraceRecord};

/// A term bound against one record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolved<'a> {
    Value(&'a SnapValue),
    Len(i64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Num {
    Int(i64),
    Float(f64),
}

impl Num {
    pub fn as_f64(self) -> f64 {
        match self {
            Num::Int(i) => i as f64,
            Num::Float(f) => f,
        }
    }

    /// Exact for integer pairs; `None` when either side is NaN.
    pub fn compare(self, other: Num) -> Option<Ordering> {
        match (self, other) {
            (Num::Int(a), Num::Int(b)) => Some(a.cmp(&b)),
            _ => self.as_f64().partial_cmp(&other.as_f64()),
        }
    }

    pub fn compare_const(self, c: i64) -> Option<Ordering> {
        self.compare(Num::Int(c))
    }
}

impl Resolved<'_> {
    pub fn num(self) -> Option<Num> {
        match self {
            Resolved::Len(n) => Some(Num::Int(n)),
            Resolved::Value(SnapValue::Int(i)) => Some(Num::Int(*i)),
            Resolved::Value(SnapValue::Float(f)) => Some(Num::Float(*f)),
            Resolved::Value(_) => None,
        }
    }

    pub fn is_null(self) -> bool {
        matches!(self, Resolved::Value(SnapValue::Null))
    }
}

pub fn resolve<'a>(term: &Term, record: &'a TraceRecord) -> Option<Resolved<'a>> {
    let path = term.record_path()?;
    let value = record.get(&path)?;
    if term.is_len() {
        match value {
            SnapValue::Array { elems, .. } => Some(Resolved::Len(elems.len() as i64)),
            _ => None,
        }
    } else {
        Some(Resolved::Value(value))
    }
}

fn num_holds(n: Option<Num>, c: i64, accept: impl Fn(Ordering) -> bool) -> bool {
    n.and_then(|n| n.compare_const(c)).is_some_and(accept)
}

fn elem_num(e: &Elem) -> Option<Num> {
    match e {
        Elem::Int(i) => Some(Num::Int(*i)),
        Elem::Float(f) => Some(Num::Float(*f)),
        _ => None,
    }
}

pub(crate) fn elem_holds(p: &ElemPredicate, e: &Elem) -> bool {
    match p {
        ElemPredicate::NotNull => !matches!(e, Elem::Null),
        ElemPredicate::StrEq(s) => matches!(e, Elem::Str(x) if x == s),
        ElemPredicate::NumEq(c) => num_holds(elem_num(e), *c, |o| o.is_eq()),
        ElemPredicate::NumGe(c) => num_holds(elem_num(e), *c, |o| o.is_ge()),
        ElemPredicate::NumLe(c) => num_holds(elem_num(e), *c, |o| o.is_le()),
    }
}

fn array_elems<'a>(term: &Term, record: &'a TraceRecord) -> Option<&'a [Elem]> {
    match resolve(term, record)? {
        Resolved::Value(SnapValue::Array { elems, .. }) => Some(elems),
        _ => None,
    }
}

fn identity(r: Option<Resolved<'_>>) -> Option<(bool, u64)> {
    match r? {
        Resolved::Value(SnapValue::Object(id)) => Some((false, *id)),
        Resolved::Value(SnapValue::Array { id, .. }) => Some((true, *id)),
        _ => None,
    }
}

/// Two-valued evaluation: missing paths, nulls where a value is needed and
/// kind mismatches all make the invariant false on this record.
pub fn evaluate(inv: &Invariant, record: &TraceRecord) -> bool {
    if inv.point.point() != record.point || inv.method != record.method {
        return false;
    }
    let num = |t: &Term| resolve(t, record).and_then(Resolved::num);
    match &inv.predicate {
        Predicate::IsNull(t) => resolve(t, record).is_some_and(Resolved::is_null),
        Predicate::NotNull(t) => resolve(t, record).is_some_and(|r| !r.is_null()),
        Predicate::StrEq(t, s) => {
            matches!(resolve(t, record), Some(Resolved::Value(SnapValue::Str(x))) if x == s)
        }
        Predicate::NumEq(t, c) => num_holds(num(t), *c, |o| o.is_eq()),
        Predicate::NumGe(t, c) => num_holds(num(t), *c, |o| o.is_ge()),
        Predicate::NumLe(t, c) => num_holds(num(t), *c, |o| o.is_le()),
        Predicate::AllElems(a, p) => {
            array_elems(a, record).is_some_and(|elems| elems.iter().all(|e| elem_holds(p, e)))
        }
        Predicate::AnyElemNull(a) => {
            array_elems(a, record).is_some_and(|elems| elems.iter().any(|e| matches!(e, Elem::Null)))
        }
        Predicate::RefEq(a, b) => match (identity(resolve(a, record)), identity(resolve(b, record))) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        },
        Predicate::Contains(t, a) => match (resolve(t, record), array_elems(a, record)) {
            (Some(Resolved::Value(SnapValue::Object(id))), Some(elems)) => {
                elems.iter().any(|e| matches!(e, Elem::Object(x) if x == id))
            }
            _ => false,
        },
        Predicate::Rel(a, op, b) => match (num(a), num(b)) {
            (Some(x), Some(y)) => x.compare(y).is_some_and(|o| op.holds(o)),
            _ => false,
        },
    }
}

/// Like [`evaluate`], but a term whose path never occurs in the method's
/// schema is reported as an error instead of evaluating to false.
pub fn evaluate_checked(
    inv: &Invariant,
    record: &TraceRecord,
    schema: &MethodSchema,
) -> Result<bool, InvariantError> {
    for t in inv.terms() {
        let path = t.record_path().ok_or_else(|| InvariantError::UnresolvableTerm(t.to_string()))?;
        if !schema.vars.contains_key(&path) {
            return Err(InvariantError::UnresolvableTerm(t.to_string()));
        }
    }
    Ok(evaluate(inv, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariants::{Condition, RelOp};
    use crate::trace::{Point, ValueSnapshot};

    fn record(point: Point, vars: Vec<(&str, SnapValue)>) -> TraceRecord {
        TraceRecord {
            test: "t".into(),
            method: "m".into(),
            point,
            call_index: 1,
            vars: vars.into_iter().map(|(p, v)| ValueSnapshot::new(p, v)).collect(),
        }
    }

    fn pre(p: Predicate) -> Invariant {
        Invariant::new("m", Condition::Pre, p)
    }

    #[test]
    fn not_null_on_null() {
        let r = record(Point::Entry, vec![("p", SnapValue::Null)]);
        assert!(!evaluate(&pre(Predicate::NotNull(Term::var("p"))), &r));
        assert!(evaluate(&pre(Predicate::IsNull(Term::var("p"))), &r));
    }

    #[test]
    fn all_elems_bounds() {
        let arr = SnapValue::Array { id: 1, elems: vec![Elem::Int(0), Elem::Int(3), Elem::Int(7)] };
        let r = record(Point::Entry, vec![("a", arr)]);
        let inv = pre(Predicate::AllElems(Term::var("a"), ElemPredicate::NumGe(0)));
        assert!(evaluate(&inv, &r));
        let inv = pre(Predicate::AllElems(Term::var("a"), ElemPredicate::NumGe(1)));
        assert!(!evaluate(&inv, &r));
        assert!(evaluate(&pre(Predicate::NumEq(Term::Len("a".into()), 3)), &r));
    }

    #[test]
    fn abs_post_relation() {
        let r = record(
            Point::Exit,
            vec![("v", SnapValue::Int(5)), ("orig(v)", SnapValue::Int(5)), ("return", SnapValue::Int(5))],
        );
        let inv = Invariant::new(
            "m",
            Condition::Post,
            Predicate::Rel(Term::Return, RelOp::Eq, Term::orig(Term::var("v"))),
        );
        assert!(evaluate(&inv, &r));
    }

    #[test]
    fn empty_and_null_arrays() {
        let empty = record(Point::Entry, vec![("a", SnapValue::Array { id: 1, elems: vec![] })]);
        let null = record(Point::Entry, vec![("a", SnapValue::Null)]);
        let all = pre(Predicate::AllElems(Term::var("a"), ElemPredicate::NumEq(7)));
        assert!(evaluate(&all, &empty));
        assert!(!evaluate(&all, &null));
        let any = pre(Predicate::AnyElemNull(Term::var("a")));
        assert!(!evaluate(&any, &empty));
        assert!(!evaluate(&any, &null));
        let contains = pre(Predicate::Contains(Term::var("o"), Term::var("a")));
        assert!(!evaluate(&contains, &null));
        assert!(!evaluate(&pre(Predicate::NumEq(Term::Len("a".into()), 0)), &null));
        assert!(evaluate(&pre(Predicate::NumEq(Term::Len("a".into()), 0)), &empty));
    }

    #[test]
    fn missing_path_is_false() {
        let r = record(Point::Entry, vec![("p", SnapValue::Null)]);
        assert!(!evaluate(&pre(Predicate::IsNull(Term::var("p.f"))), &r));
        assert!(!evaluate(&pre(Predicate::NotNull(Term::var("p.f"))), &r));
    }

    #[test]
    fn identity_and_containment() {
        let r = record(
            Point::Entry,
            vec![
                ("a", SnapValue::Object(4)),
                ("b", SnapValue::Object(4)),
                ("c", SnapValue::Object(5)),
                ("xs", SnapValue::Array { id: 9, elems: vec![Elem::Null, Elem::Object(5)] }),
            ],
        );
        assert!(evaluate(&pre(Predicate::RefEq(Term::var("a"), Term::var("b"))), &r));
        assert!(!evaluate(&pre(Predicate::RefEq(Term::var("a"), Term::var("c"))), &r));
        assert!(evaluate(&pre(Predicate::Contains(Term::var("c"), Term::var("xs"))), &r));
        assert!(!evaluate(&pre(Predicate::Contains(Term::var("a"), Term::var("xs"))), &r));
        assert!(evaluate(&pre(Predicate::AnyElemNull(Term::var("xs"))), &r));
    }

    #[test]
    fn nan_fails_numeric() {
        let r = record(Point::Entry, vec![("x", SnapValue::Float(f64::NAN)), ("y", SnapValue::Int(1))]);
        assert!(!evaluate(&pre(Predicate::NumLe(Term::var("x"), 1 << 30)), &r));
        assert!(!evaluate(&pre(Predicate::Rel(Term::var("x"), RelOp::Le, Term::var("y"))), &r));
    }

    #[test]
    fn point_mismatch_is_false() {
        let r = record(Point::Exit, vec![("x", SnapValue::Int(1)), ("orig(x)", SnapValue::Int(1)), ("return", SnapValue::Null)]);
        assert!(!evaluate(&pre(Predicate::NumEq(Term::var("x"), 1)), &r));
    }

    #[test]
    fn checked_evaluation_reports_unknown_paths() {
        let r = record(Point::Entry, vec![("p", SnapValue::Null)]);
        let schema = MethodSchema::from_records("m", Condition::Pre, [&r]);
        let inv = pre(Predicate::NotNull(Term::var("q")));
        assert_eq!(
            evaluate_checked(&inv, &r, &schema),
            Err(InvariantError::UnresolvableTerm("q".into()))
        );
        assert_eq!(evaluate_checked(&pre(Predicate::IsNull(Term::var("p"))), &r, &schema), Ok(true));
    }
}
