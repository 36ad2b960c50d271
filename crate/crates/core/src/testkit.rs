//! Randomized trace generation and brute-force oracles for property tests.
//! Compiled only for tests or with the `testkit` feature.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::invariants::{enumerate_candidates, evaluate, implies, Condition, Invariant, MethodSchema};
use crate::trace::{orig_path, Elem, Point, SnapValue, TraceRecord, ValueSnapshot};

/// Values near pool constants, so bounds and equalities are frequently hit.
const INTERESTING: &[i64] = &[
    -3, -2, -1, 0, 1, 2, 3, 14, 15, 16, 17, 99, 100, 101, 1000, 1023, 1024, 5000,
];
const FLOATS: &[f64] = &[-1.0, -0.5, 0.0, 0.5, 1.0, 16.0, 99.5, 100.0];
const STRINGS: &[&str] = &["", "a", "b", "key"];

#[derive(Debug, Clone)]
enum ElemGen {
    Int { lo: i64, hi: i64 },
    Str(Vec<&'static str>),
    Object(Vec<u64>),
}

#[derive(Debug, Clone)]
enum Gen {
    Int { lo: i64, hi: i64 },
    Float(Vec<f64>),
    Str(Vec<&'static str>),
    Object { ids: Vec<u64>, fields: Vec<(String, Gen)> },
    Array { ids: Vec<u64>, min_len: usize, max_len: usize, elem: ElemGen, elem_null_rate: f64 },
}

#[derive(Debug, Clone)]
struct VarGen {
    gen: Gen,
    null_rate: f64,
}

fn pick_range<R: Rng>(rng: &mut R) -> (i64, i64) {
    let a = *INTERESTING.choose(rng).unwrap();
    if rng.random_bool(0.3) {
        return (a, a);
    }
    let b = *INTERESTING.choose(rng).unwrap();
    (a.min(b), a.max(b))
}

fn subset<R: Rng, T: Copy>(rng: &mut R, pool: &[T], max: usize) -> Vec<T> {
    let n = rng.random_range(1..=max.min(pool.len()));
    pool.choose_multiple(rng, n).copied().collect()
}

fn null_rate<R: Rng>(rng: &mut R) -> f64 {
    *[0.0, 0.0, 0.1, 0.5, 1.0].choose(rng).unwrap()
}

fn random_gen<R: Rng>(rng: &mut R, depth: usize) -> VarGen {
    let ids: Vec<u64> = (1..=4).collect();
    let gen = match rng.random_range(0..if depth < 1 { 6 } else { 4 }) {
        0 | 1 => {
            let (lo, hi) = pick_range(rng);
            Gen::Int { lo, hi }
        }
        2 => Gen::Str(subset(rng, STRINGS, 2)),
        3 if depth < 1 => Gen::Float(subset(rng, FLOATS, 3)),
        3 => Gen::Object { ids: subset(rng, &ids, 2), fields: Vec::new() },
        4 => {
            let fields = (0..rng.random_range(0..=2))
                .map(|k| (format!("f{k}"), random_gen(rng, depth + 1).gen))
                .collect();
            Gen::Object { ids: subset(rng, &ids, 3), fields }
        }
        _ => {
            let elem = match rng.random_range(0..3) {
                0 => {
                    let (lo, hi) = pick_range(rng);
                    ElemGen::Int { lo, hi }
                }
                1 => ElemGen::Str(subset(rng, STRINGS, 2)),
                _ => ElemGen::Object(subset(rng, &ids, 3)),
            };
            let min_len = rng.random_range(0..=1);
            Gen::Array {
                ids: subset(rng, &[10, 11, 12], 2),
                min_len,
                max_len: rng.random_range(min_len..=4),
                elem,
                elem_null_rate: *[0.0, 0.0, 0.2, 1.0].choose(rng).unwrap(),
            }
        }
    };
    let null_rate = if matches!(gen, Gen::Int { .. } | Gen::Float(_)) {
        if rng.random_bool(0.1) { 0.1 } else { 0.0 }
    } else {
        null_rate(rng)
    };
    VarGen { gen, null_rate }
}

fn int_between<R: Rng>(rng: &mut R, lo: i64, hi: i64) -> i64 {
    // bias towards the endpoints so boundaries are exercised
    match rng.random_range(0..4) {
        0 => lo,
        1 => hi,
        _ => rng.random_range(lo..=hi),
    }
}

fn draw<R: Rng>(rng: &mut R, path: &str, v: &VarGen, out: &mut Vec<ValueSnapshot>) {
    if rng.random_bool(v.null_rate) {
        out.push(ValueSnapshot::new(path, SnapValue::Null));
        return;
    }
    match &v.gen {
        Gen::Int { lo, hi } => {
            out.push(ValueSnapshot::new(path, SnapValue::Int(int_between(rng, *lo, *hi))))
        }
        Gen::Float(values) => {
            out.push(ValueSnapshot::new(path, SnapValue::Float(*values.choose(rng).unwrap())))
        }
        Gen::Str(pool) => {
            out.push(ValueSnapshot::new(path, SnapValue::Str(pool.choose(rng).unwrap().to_string())))
        }
        Gen::Object { ids, fields } => {
            out.push(ValueSnapshot::new(path, SnapValue::Object(*ids.choose(rng).unwrap())));
            for (f, g) in fields {
                let child = VarGen { gen: g.clone(), null_rate: 0.1 };
                draw(rng, &format!("{path}.{f}"), &child, out);
            }
        }
        Gen::Array { ids, min_len, max_len, elem, elem_null_rate } => {
            let len = rng.random_range(*min_len..=*max_len);
            let elems = (0..len)
                .map(|_| {
                    if rng.random_bool(*elem_null_rate) {
                        return Elem::Null;
                    }
                    match elem {
                        ElemGen::Int { lo, hi } => Elem::Int(int_between(rng, *lo, *hi)),
                        ElemGen::Str(pool) => Elem::Str(pool.choose(rng).unwrap().to_string()),
                        ElemGen::Object(ids) => Elem::Object(*ids.choose(rng).unwrap()),
                    }
                })
                .collect();
            out.push(ValueSnapshot::new(
                path,
                SnapValue::Array { id: *ids.choose(rng).unwrap(), elems },
            ));
        }
    }
}

/// A random method profile from which coherent records can be drawn.
#[derive(Debug, Clone)]
pub struct RandomMethod {
    pub method: String,
    params: Vec<(String, VarGen)>,
    /// An extra object parameter drawn from the elements of the indexed array parameter.
    member_of: Option<usize>,
    ret: VarGen,
    /// Probability that a parameter's post-state differs from its pre-state.
    mutate: f64,
}

impl RandomMethod {
    pub fn new<R: Rng>(rng: &mut R, method: &str) -> Self {
        let names = ["a", "b", "c", "d"];
        let n = rng.random_range(1..=3);
        let params = names[..n]
            .iter()
            .map(|p| (p.to_string(), random_gen(rng, 0)))
            .collect::<Vec<_>>();
        let member_of = params
            .iter()
            .position(|(_, g)| matches!(g.gen, Gen::Array { elem: ElemGen::Object(_), .. }))
            .filter(|_| rng.random_bool(0.7));
        RandomMethod {
            method: method.to_string(),
            params,
            member_of,
            ret: random_gen(rng, 0),
            mutate: *[0.0, 0.3].choose(rng).unwrap(),
        }
    }

    pub fn record<R: Rng>(&self, rng: &mut R, point: Point, call_index: u64) -> TraceRecord {
        let mut entry = Vec::new();
        for (p, g) in &self.params {
            draw(rng, p, g, &mut entry);
        }
        if let Some(k) = self.member_of {
            let name = &self.params[k].0;
            let picked = entry.iter().find(|v| v.path == *name).and_then(|v| match &v.value {
                SnapValue::Array { elems, .. } => {
                    let ids: Vec<u64> = elems
                        .iter()
                        .filter_map(|e| match e {
                            Elem::Object(id) => Some(*id),
                            _ => None,
                        })
                        .collect();
                    ids.choose(rng).copied()
                }
                _ => None,
            });
            entry.push(ValueSnapshot::new("e", picked.map_or(SnapValue::Null, SnapValue::Object)));
        }
        let vars = match point {
            Point::Entry => entry,
            Point::Exit => {
                let mut vars = Vec::new();
                for (p, g) in &self.params {
                    if rng.random_bool(self.mutate) {
                        // a fresh draw stands in for an arbitrary update
                        draw(rng, p, g, &mut vars);
                    } else {
                        let prefix = format!("{p}.");
                        vars.extend(
                            entry
                                .iter()
                                .filter(|v| v.path == *p || v.path.starts_with(&prefix))
                                .cloned(),
                        );
                    }
                }
                vars.extend(entry.iter().filter(|v| v.path == "e").cloned());
                vars.extend(entry.into_iter().map(|v| ValueSnapshot::new(orig_path(&v.path), v.value)));
                draw(rng, "return", &self.ret, &mut vars);
                vars
            }
        };
        TraceRecord {
            test: "test_random".into(),
            method: self.method.clone(),
            point,
            call_index,
            vars,
        }
    }

    pub fn records<R: Rng>(&self, rng: &mut R, point: Point, n: usize) -> Vec<TraceRecord> {
        (1..=n as u64).map(|k| self.record(rng, point, k)).collect()
    }
}

/// Exhaustive inference: evaluate every enumerated candidate on every record,
/// then keep the elements not implied by another holding candidate.
pub fn brute_force_infer(
    records: &[TraceRecord],
    method: &str,
    point: Condition,
    min_support: usize,
) -> BTreeSet<Invariant> {
    let relevant: Vec<&TraceRecord> = records
        .iter()
        .filter(|r| r.method == method && r.point == point.point())
        .collect();
    if relevant.len() < min_support {
        return BTreeSet::new();
    }
    let schema = MethodSchema::from_records(method, point, relevant.iter().copied());
    let holding: Vec<Invariant> = enumerate_candidates(&schema)
        .into_iter()
        .filter(|c| relevant.iter().all(|r| evaluate(c, r)))
        .collect();
    let mut out = BTreeSet::new();
    for (k, i) in holding.iter().enumerate() {
        let dominated = holding
            .iter()
            .enumerate()
            .any(|(m, j)| m != k && j != i && implies(j, i));
        if !dominated {
            out.insert(i.clone());
        }
    }
    out
}
