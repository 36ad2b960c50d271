use std::collections::{BTreeMap, BTreeSet};

use super::{ConstantPool, Condition, ElemPredicate, Invariant, Predicate, RelOp, Term};
use crate::trace::{Elem, SnapValue, TraceRecord, ValueKind};

/// What was observed at one record path.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathInfo {
    /// Non-null kinds seen.
    pub kinds: BTreeSet<ValueKind>,
    pub saw_null: bool,
    /// Non-null element kinds seen, for arrays.
    pub elem_kinds: BTreeSet<ValueKind>,
    pub saw_null_elem: bool,
    /// Distinct string values seen (string paths only).
    pub strings: BTreeSet<String>,
    /// Distinct string elements seen (arrays of strings only).
    pub elem_strings: BTreeSet<String>,
}

/// Type class of a term, derived from a [`PathInfo`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermClass {
    Numeric,
    String,
    Object,
    Array,
    /// Only nulls were ever observed.
    NullOnly,
    /// Incompatible kinds observed; no candidates.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ElemClass {
    Numeric,
    String,
    Reference,
    NullOnly,
    Empty,
    Mixed,
}

impl PathInfo {
    pub fn class(&self) -> TermClass {
        classify(&self.kinds, TermClass::NullOnly, |k| match k {
            ValueKind::String => TermClass::String,
            ValueKind::Object => TermClass::Object,
            _ => TermClass::Array,
        })
    }

    pub(crate) fn elem_class(&self) -> ElemClass {
        if self.elem_kinds.is_empty() {
            return if self.saw_null_elem { ElemClass::NullOnly } else { ElemClass::Empty };
        }
        match classify(&self.elem_kinds, TermClass::NullOnly, |k| match k {
            ValueKind::String => TermClass::String,
            _ => TermClass::Object,
        }) {
            TermClass::Numeric => ElemClass::Numeric,
            TermClass::String => ElemClass::String,
            TermClass::Object => ElemClass::Reference,
            _ => ElemClass::Mixed,
        }
    }
}

fn classify(
    kinds: &BTreeSet<ValueKind>,
    empty: TermClass,
    single: impl Fn(ValueKind) -> TermClass,
) -> TermClass {
    if kinds.is_empty() {
        return empty;
    }
    if kinds.iter().all(|k| k.is_numeric()) {
        return TermClass::Numeric;
    }
    if kinds.len() == 1 {
        return single(*kinds.iter().next().unwrap());
    }
    TermClass::Mixed
}

/// The paths and kinds observed for one method at one program point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodSchema {
    pub method: String,
    pub point: Condition,
    pub vars: BTreeMap<String, PathInfo>,
}

impl MethodSchema {
    pub fn new(method: impl Into<String>, point: Condition) -> Self {
        MethodSchema { method: method.into(), point, vars: BTreeMap::new() }
    }

    /// Builds the schema from the records matching `(method, point)`.
    pub fn from_records<'a, I>(method: &str, point: Condition, records: I) -> Self
    where
        I: IntoIterator<Item = &'a TraceRecord>,
    {
        let mut schema = MethodSchema::new(method, point);
        for r in records {
            if r.method == method && r.point == point.point() {
                schema.observe(r);
            }
        }
        schema
    }

    pub fn observe(&mut self, record: &TraceRecord) {
        for v in &record.vars {
            let info = self.vars.entry(v.path.clone()).or_default();
            match &v.value {
                SnapValue::Null => info.saw_null = true,
                SnapValue::Str(s) => {
                    info.kinds.insert(ValueKind::String);
                    info.strings.insert(s.clone());
                }
                SnapValue::Array { elems, .. } => {
                    info.kinds.insert(ValueKind::Array);
                    for e in elems {
                        match e {
                            Elem::Null => info.saw_null_elem = true,
                            Elem::Str(s) => {
                                info.elem_kinds.insert(ValueKind::String);
                                info.elem_strings.insert(s.clone());
                            }
                            other => {
                                info.elem_kinds.insert(other.kind());
                            }
                        }
                    }
                }
                other => {
                    info.kinds.insert(other.kind());
                }
            }
        }
    }

    /// Declares a path with a single kind, for hand-built schemas.
    pub fn with_var(mut self, path: &str, kind: ValueKind) -> Self {
        let info = self.vars.entry(path.to_string()).or_default();
        if kind == ValueKind::Null {
            info.saw_null = true;
        } else {
            info.kinds.insert(kind);
        }
        self
    }
}

fn term_for_path(path: &str, point: Condition) -> Option<Term> {
    if point == Condition::Pre {
        return Some(Term::var(path));
    }
    if path == "return" {
        return Some(Term::Return);
    }
    match path.strip_prefix("orig(").and_then(|p| p.strip_suffix(')')) {
        Some(inner) => Some(Term::orig(Term::var(inner))),
        None => Some(Term::var(path)),
    }
}

fn len_term(term: &Term, path: &str) -> Term {
    match term {
        Term::Orig(inner) => match inner.as_ref() {
            Term::Var(p) => Term::orig(Term::Len(p.clone())),
            _ => unreachable!("orig terms wrap plain paths"),
        },
        _ => Term::Len(path.to_string()),
    }
}

/// All terms for a schema, in deterministic order, with their class and the
/// info of the underlying path.
pub fn terms_of(schema: &MethodSchema) -> Vec<(Term, TermClass, &PathInfo)> {
    let mut out = Vec::new();
    for (path, info) in &schema.vars {
        let Some(term) = term_for_path(path, schema.point) else { continue };
        let class = info.class();
        if class == TermClass::Array {
            out.push((len_term(&term, path), TermClass::Numeric, info));
        }
        out.push((term, class, info));
    }
    out
}

fn numeric_family(out: &mut Vec<Predicate>, t: &Term) {
    for &c in ConstantPool::values() {
        out.push(Predicate::NumEq(t.clone(), c));
        out.push(Predicate::NumGe(t.clone(), c));
        out.push(Predicate::NumLe(t.clone(), c));
    }
}

/// The finite candidate universe for a method/point schema.
pub fn enumerate_candidates(schema: &MethodSchema) -> Vec<Invariant> {
    let terms = terms_of(schema);
    let mut preds = Vec::new();

    for (t, class, info) in &terms {
        match class {
            TermClass::Numeric => numeric_family(&mut preds, t),
            TermClass::NullOnly | TermClass::Object => {
                preds.push(Predicate::IsNull(t.clone()));
                preds.push(Predicate::NotNull(t.clone()));
            }
            TermClass::String => {
                preds.push(Predicate::IsNull(t.clone()));
                preds.push(Predicate::NotNull(t.clone()));
                for s in &info.strings {
                    preds.push(Predicate::StrEq(t.clone(), s.clone()));
                }
            }
            TermClass::Array => {
                preds.push(Predicate::IsNull(t.clone()));
                preds.push(Predicate::NotNull(t.clone()));
                let elem = |p| Predicate::AllElems(t.clone(), p);
                match info.elem_class() {
                    ElemClass::Numeric => {
                        for &c in ConstantPool::values() {
                            preds.push(elem(ElemPredicate::NumEq(c)));
                            preds.push(elem(ElemPredicate::NumGe(c)));
                            preds.push(elem(ElemPredicate::NumLe(c)));
                        }
                    }
                    ElemClass::String => {
                        preds.push(elem(ElemPredicate::NotNull));
                        for s in &info.elem_strings {
                            preds.push(elem(ElemPredicate::StrEq(s.clone())));
                        }
                        preds.push(Predicate::AnyElemNull(t.clone()));
                    }
                    ElemClass::Reference | ElemClass::NullOnly => {
                        preds.push(elem(ElemPredicate::NotNull));
                        preds.push(Predicate::AnyElemNull(t.clone()));
                    }
                    ElemClass::Empty | ElemClass::Mixed => {}
                }
            }
            TermClass::Mixed => {}
        }
    }

    for (i, (a, ca, _)) in terms.iter().enumerate() {
        for (b, cb, _) in &terms[i + 1..] {
            match (ca, cb) {
                (TermClass::Numeric, TermClass::Numeric) => {
                    for op in RelOp::ALL {
                        preds.push(Predicate::Rel(a.clone(), op, b.clone()));
                    }
                }
                (TermClass::Object, TermClass::Object) | (TermClass::Array, TermClass::Array) => {
                    preds.push(Predicate::RefEq(a.clone(), b.clone()));
                }
                _ => {}
            }
        }
    }

    for (t, ct, _) in &terms {
        if *ct != TermClass::Object {
            continue;
        }
        for (a, ca, info) in &terms {
            if *ca == TermClass::Array
                && info.elem_class() == ElemClass::Reference
                && info.elem_kinds.contains(&ValueKind::Object)
            {
                preds.push(Predicate::Contains(t.clone(), a.clone()));
            }
        }
    }

    preds
        .into_iter()
        .map(|p| Invariant::new(schema.method.clone(), schema.point, p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_int_has_195_candidates() {
        let s = MethodSchema::new("f", Condition::Pre).with_var("v", ValueKind::Int);
        let c = enumerate_candidates(&s);
        assert_eq!(c.len(), 3 * 65);
        assert!(c.iter().all(|i| matches!(
            i.predicate,
            Predicate::NumEq(..) | Predicate::NumGe(..) | Predicate::NumLe(..)
        )));
    }

    #[test]
    fn empty_schema() {
        assert!(enumerate_candidates(&MethodSchema::new("f", Condition::Pre)).is_empty());
    }

    #[test]
    fn lone_object() {
        let s = MethodSchema::new("f", Condition::Pre).with_var("p", ValueKind::Object);
        let c: Vec<String> = enumerate_candidates(&s).iter().map(|i| i.expression()).collect();
        assert_eq!(c, ["p == null", "p != null"]);
    }

    #[test]
    fn exit_terms() {
        let s = MethodSchema::new("f", Condition::Post)
            .with_var("orig(v)", ValueKind::Int)
            .with_var("return", ValueKind::Int)
            .with_var("v", ValueKind::Int);
        let terms: Vec<String> = terms_of(&s).iter().map(|(t, _, _)| t.to_string()).collect();
        assert_eq!(terms, ["orig(v)", "return", "v"]);
        let c = enumerate_candidates(&s);
        assert_eq!(c.len(), 3 * 195 + 3 * 5);
    }

    #[test]
    fn arrays_get_length_and_element_candidates() {
        let mut s = MethodSchema::new("f", Condition::Pre).with_var("xs", ValueKind::Array);
        s.vars.get_mut("xs").unwrap().elem_kinds.insert(ValueKind::Object);
        s = s.with_var("o", ValueKind::Object);
        let c: Vec<String> = enumerate_candidates(&s).iter().map(|i| i.expression()).collect();
        assert_eq!(c.iter().filter(|e| e.starts_with("len(xs)")).count(), 195);
        assert!(c.contains(&"forall(xs, elem != null)".to_string()));
        assert!(c.contains(&"exists(xs, elem == null)".to_string()));
        assert!(c.contains(&"contains(xs, o)".to_string()));
        assert!(!c.iter().any(|e| e.starts_with("same(")));
    }

    #[test]
    fn mixed_kinds_are_skipped() {
        let s = MethodSchema::new("f", Condition::Pre)
            .with_var("x", ValueKind::String)
            .with_var("x", ValueKind::Object);
        assert!(enumerate_candidates(&s).is_empty());
    }
}
