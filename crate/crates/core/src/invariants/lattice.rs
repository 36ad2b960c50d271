use std::collections::BTreeSet;

use super::{ElemPredicate, Invariant, Predicate, RelOp};

/// Element-level implication used inside `AllElems`.
pub fn elem_implies(j: &ElemPredicate, i: &ElemPredicate) -> bool {
    use ElemPredicate::*;
    if j == i {
        return true;
    }
    match (j, i) {
        (NumEq(c), NumGe(d)) => d <= c,
        (NumEq(c), NumLe(d)) => d >= c,
        (NumGe(c), NumGe(d)) => d <= c,
        (NumLe(c), NumLe(d)) => d >= c,
        (StrEq(_) | NumEq(_) | NumGe(_) | NumLe(_), NotNull) => true,
        _ => false,
    }
}

fn rel_implies(j: RelOp, i: RelOp) -> bool {
    use RelOp::*;
    j == i || matches!((j, i), (Eq, Le) | (Eq, Ge) | (Lt, Le) | (Gt, Ge))
}

/// Single-premise syntactic implication: does `j` entail `i`?
pub fn implies(j: &Invariant, i: &Invariant) -> bool {
    use Predicate::*;
    if j.method != i.method || j.point != i.point {
        return false;
    }
    if j.predicate == i.predicate {
        return true;
    }
    match (&j.predicate, &i.predicate) {
        (NumEq(t, c), NumGe(u, d)) => t == u && d <= c,
        (NumEq(t, c), NumLe(u, d)) => t == u && d >= c,
        (NumGe(t, c), NumGe(u, d)) => t == u && d <= c,
        (NumLe(t, c), NumLe(u, d)) => t == u && d >= c,
        (StrEq(t, _) | NumEq(t, _) | NumGe(t, _) | NumLe(t, _) | AllElems(t, _), NotNull(u)) => t == u,
        (AllElems(a, p), AllElems(b, q)) => a == b && elem_implies(p, q),
        (Rel(a, op1, b), Rel(c, op2, d)) => a == c && b == d && rel_implies(*op1, *op2),
        _ => false,
    }
}

/// Drops every invariant implied by a different member of the set.
pub fn strongest(set: BTreeSet<Invariant>) -> BTreeSet<Invariant> {
    let items: Vec<&Invariant> = set.iter().collect();
    let keep: Vec<bool> = items
        .iter()
        .map(|i| !items.iter().any(|j| j != i && implies(j, i)))
        .collect();
    items
        .into_iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(i, _)| i.clone())
        .collect()
}
