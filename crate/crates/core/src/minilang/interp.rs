//! Tree-walking interpreter with entry/exit instrumentation of core functions.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use super::ast::*;
use crate::trace::{orig_path, Elem, Point, SnapValue, TraceRecord, ValueSnapshot};

/// Maximum number of field hops recorded below a variable (`this.counter.value`).
pub const FLATTEN_DEPTH: usize = 2;

const STEP_BUDGET: u64 = 5_000_000;
const MAX_CALL_DEPTH: usize = 200;

/// Exponential back-off sampling of calls to one method: calls 1..=10 are
/// always traced, after that only multiples of the current decade
/// (20, 30, .., 100, 200, .., 1000, 2000, ..).
pub fn sample_decision(call_index: u64) -> bool {
    if call_index == 0 {
        return false;
    }
    if call_index <= 10 {
        return true;
    }
    let mut step = 10u64;
    while call_index / step >= 10 {
        step *= 10;
    }
    call_index.is_multiple_of(step)
}

/// 64-bit linear congruential generator, `x' = a*x + c mod 2^64` with
/// `a = 6364136223846793005` and `c = 1442695040888963407` (Knuth's MMIX
/// constants). Outputs are the high 32 bits of the state.
#[derive(Debug, Clone)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub const MULTIPLIER: u64 = 6364136223846793005;
    pub const INCREMENT: u64 = 1442695040888963407;

    pub fn new(seed: u64) -> Self {
        Lcg { state: seed }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.state = self
            .state
            .wrapping_mul(Self::MULTIPLIER)
            .wrapping_add(Self::INCREMENT);
        (self.state >> 32) as u32
    }

    /// Uniform-ish integer in `lo..=hi` (modulo bias is accepted).
    pub fn range(&mut self, lo: i64, hi: i64) -> i64 {
        let span = hi.wrapping_sub(lo) as u64 + 1;
        let draw = ((self.next_u32() as u64) << 32) | self.next_u32() as u64;
        if span == 0 {
            return draw as i64;
        }
        lo.wrapping_add((draw % span) as i64)
    }
}

/// FNV-1a, used to derive a per-test generator seed from the test name.
fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn test_seed(seed: u64, test: &str) -> u64 {
    seed ^ fnv1a(test)
}

#[derive(Debug)]
pub struct Object {
    pub id: u64,
    pub type_name: String,
    pub fields: RefCell<Vec<(String, Value)>>,
}

#[derive(Debug)]
pub struct Array {
    pub id: u64,
    pub items: RefCell<Vec<Value>>,
}

#[derive(Debug, Clone)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(Rc<str>),
    Null,
    Object(Rc<Object>),
    Array(Rc<Array>),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "string",
            Value::Null => "null",
            Value::Object(_) => "object",
            Value::Array(_) => "array",
        }
    }

    fn truthy(&self) -> bool {
        match self {
            Value::Int(v) => *v != 0,
            Value::Float(v) => *v != 0.0,
            Value::Str(s) => !s.is_empty(),
            Value::Null => false,
            Value::Object(_) | Value::Array(_) => true,
        }
    }

    fn bool(b: bool) -> Value {
        Value::Int(b as i64)
    }

    fn to_elem(&self) -> Elem {
        match self {
            Value::Int(v) => Elem::Int(*v),
            Value::Float(v) => Elem::Float(*v),
            Value::Str(s) => Elem::Str(s.to_string()),
            Value::Null => Elem::Null,
            Value::Object(o) => Elem::Object(o.id),
            Value::Array(a) => Elem::Array(a.id),
        }
    }
}

/// Flattens `value` into dotted-path snapshots, following object fields at
/// most [`FLATTEN_DEPTH`] hops. Arrays whose elements mix kinds are omitted.
pub fn flatten(path: &str, value: &Value, out: &mut Vec<ValueSnapshot>) {
    flatten_at(path, value, 0, out)
}

fn flatten_at(path: &str, value: &Value, depth: usize, out: &mut Vec<ValueSnapshot>) {
    let snap = match value {
        Value::Int(v) => SnapValue::Int(*v),
        Value::Float(v) => SnapValue::Float(*v),
        Value::Str(s) => SnapValue::Str(s.to_string()),
        Value::Null => SnapValue::Null,
        Value::Object(o) => {
            out.push(ValueSnapshot::new(path, SnapValue::Object(o.id)));
            if depth < FLATTEN_DEPTH {
                for (field, v) in o.fields.borrow().iter() {
                    flatten_at(&format!("{path}.{field}"), v, depth + 1, out);
                }
            }
            return;
        }
        Value::Array(a) => {
            let elems: Vec<Elem> = a.items.borrow().iter().map(Value::to_elem).collect();
            let mut kinds = elems.iter().map(Elem::kind).filter(|k| *k != crate::trace::ValueKind::Null);
            if let Some(first) = kinds.next() {
                if kinds.any(|k| k != first) {
                    return;
                }
            }
            SnapValue::Array { id: a.id, elems }
        }
    };
    out.push(ValueSnapshot::new(path, snap));
}

pub trait TraceSink {
    fn begin_test(&mut self, _test: &str) {}
    fn record(&mut self, record: TraceRecord);
    fn end_test(&mut self, _test: &str) {}
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, record: TraceRecord) {
        self.push(record);
    }
}

/// Groups records by test; every begun test gets an entry, even if empty.
#[derive(Debug, Default)]
pub struct PerTestSink {
    pub traces: BTreeMap<String, Vec<TraceRecord>>,
}

impl TraceSink for PerTestSink {
    fn begin_test(&mut self, test: &str) {
        self.traces.entry(test.to_string()).or_default();
    }

    fn record(&mut self, record: TraceRecord) {
        self.traces.entry(record.test.clone()).or_default().push(record);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestOutcome {
    pub name: String,
    pub passed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecutionReport {
    pub tests: Vec<TestOutcome>,
    /// Total calls per core method across all executed tests.
    pub call_counts: BTreeMap<String, u64>,
    /// Calls that passed [`sample_decision`] and were traced.
    pub traced_calls: BTreeMap<String, u64>,
}

impl ExecutionReport {
    pub fn passed(&self) -> usize {
        self.tests.iter().filter(|t| t.passed).count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("`{0}` is not a test function of this program")]
    UnknownTest(String),
}

/// Runs the selected tests in name order, each with fresh call counters and
/// its own generator seeded from `(seed, test name)`.
pub fn run_tests(
    program: &Program,
    selected: &BTreeSet<String>,
    sink: &mut dyn TraceSink,
    seed: u64,
) -> Result<ExecutionReport, RunError> {
    let tests = program.tests();
    if let Some(unknown) = selected.iter().find(|t| !tests.contains(*t)) {
        return Err(RunError::UnknownTest(unknown.clone()));
    }
    let functions: HashMap<&str, &Function> =
        program.functions.iter().map(|f| (f.name.as_str(), f)).collect();
    let structs: HashMap<&str, &StructDecl> =
        program.structs.iter().map(|s| (s.name.as_str(), s)).collect();

    let mut report = ExecutionReport::default();
    for test in selected {
        sink.begin_test(test);
        let mut interp = Interpreter {
            functions: &functions,
            structs: &structs,
            core: &program.core,
            test,
            rng: Lcg::new(test_seed(seed, test)),
            next_id: 1,
            steps: 0,
            depth: 0,
            counters: BTreeMap::new(),
            sink: &mut *sink,
            traced: BTreeMap::new(),
        };
        let result = interp.call(test, Vec::new());
        let counters = std::mem::take(&mut interp.counters);
        let traced = std::mem::take(&mut interp.traced);
        for (m, n) in counters {
            *report.call_counts.entry(m).or_default() += n;
        }
        for (m, n) in traced {
            *report.traced_calls.entry(m).or_default() += n;
        }
        sink.end_test(test);
        report.tests.push(TestOutcome {
            name: test.clone(),
            passed: result.is_ok(),
            error: result.err(),
        });
    }
    Ok(report)
}

type RtResult<T> = Result<T, String>;

enum Flow {
    Normal,
    Return(Value),
}

struct Interpreter<'p, 's> {
    functions: &'p HashMap<&'p str, &'p Function>,
    structs: &'p HashMap<&'p str, &'p StructDecl>,
    core: &'p BTreeSet<String>,
    test: &'p str,
    rng: Lcg,
    next_id: u64,
    steps: u64,
    depth: usize,
    counters: BTreeMap<String, u64>,
    traced: BTreeMap<String, u64>,
    sink: &'s mut dyn TraceSink,
}

impl Interpreter<'_, '_> {
    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn tick(&mut self) -> RtResult<()> {
        self.steps += 1;
        if self.steps > STEP_BUDGET {
            return Err("step budget exhausted".into());
        }
        Ok(())
    }

    fn call(&mut self, name: &str, args: Vec<Value>) -> RtResult<Value> {
        let f = *self
            .functions
            .get(name)
            .ok_or_else(|| format!("call to undefined function `{name}`"))?;
        if f.params.len() != args.len() {
            return Err(format!(
                "`{name}` expects {} arguments, got {}",
                f.params.len(),
                args.len()
            ));
        }
        if self.depth >= MAX_CALL_DEPTH {
            return Err("call depth exceeded".into());
        }

        let mut entry_vars = None;
        let mut call_index = 0;
        if self.core.contains(name) {
            let counter = self.counters.entry(name.to_string()).or_default();
            *counter += 1;
            call_index = *counter;
            if sample_decision(call_index) {
                *self.traced.entry(name.to_string()).or_default() += 1;
                let mut vars = Vec::new();
                for (p, v) in f.params.iter().zip(&args) {
                    flatten(p, v, &mut vars);
                }
                self.sink.record(TraceRecord {
                    test: self.test.to_string(),
                    method: name.to_string(),
                    point: Point::Entry,
                    call_index,
                    vars: vars.clone(),
                });
                entry_vars = Some(vars);
            }
        }

        let mut env: HashMap<String, Value> = f.params.iter().cloned().zip(args).collect();
        self.depth += 1;
        let flow = self.block(&f.body, &mut env);
        self.depth -= 1;
        let result = match flow? {
            Flow::Return(v) => v,
            Flow::Normal => Value::Null,
        };

        if let Some(entry) = entry_vars {
            let mut vars = Vec::new();
            for p in &f.params {
                flatten(p, &env[p], &mut vars);
            }
            vars.extend(
                entry
                    .into_iter()
                    .map(|v| ValueSnapshot::new(orig_path(&v.path), v.value)),
            );
            flatten("return", &result, &mut vars);
            self.sink.record(TraceRecord {
                test: self.test.to_string(),
                method: name.to_string(),
                point: Point::Exit,
                call_index,
                vars,
            });
        }
        Ok(result)
    }

    fn block(&mut self, b: &Block, env: &mut HashMap<String, Value>) -> RtResult<Flow> {
        for s in &b.stmts {
            if let Flow::Return(v) = self.stmt(s, env)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn stmt(&mut self, s: &Stmt, env: &mut HashMap<String, Value>) -> RtResult<Flow> {
        self.tick()?;
        match s {
            Stmt::Assign { target, value } => {
                let v = self.expr(value, env)?;
                self.assign(target, v, env)?;
                Ok(Flow::Normal)
            }
            Stmt::If { cond, then, otherwise } => {
                if self.expr(cond, env)?.truthy() {
                    self.block(then, env)
                } else if let Some(other) = otherwise {
                    self.block(other, env)
                } else {
                    Ok(Flow::Normal)
                }
            }
            Stmt::While { cond, body } => {
                while self.expr(cond, env)?.truthy() {
                    self.tick()?;
                    if let Flow::Return(v) = self.block(body, env)? {
                        return Ok(Flow::Return(v));
                    }
                }
                Ok(Flow::Normal)
            }
            Stmt::Return(value) => {
                let v = match value {
                    Some(e) => self.expr(e, env)?,
                    None => Value::Null,
                };
                Ok(Flow::Return(v))
            }
            Stmt::Expr(e) => {
                self.expr(e, env)?;
                Ok(Flow::Normal)
            }
        }
    }

    fn assign(&mut self, target: &Expr, v: Value, env: &mut HashMap<String, Value>) -> RtResult<()> {
        match &target.kind {
            ExprKind::Var(name) => {
                env.insert(name.clone(), v);
                Ok(())
            }
            ExprKind::Field(obj, field) => match self.expr(obj, env)? {
                Value::Object(o) => {
                    let mut fields = o.fields.borrow_mut();
                    let slot = fields
                        .iter_mut()
                        .find(|(f, _)| f == field)
                        .ok_or_else(|| format!("`{}` has no field `{field}`", o.type_name))?;
                    slot.1 = v;
                    Ok(())
                }
                other => Err(format!("field assignment on {}", other.type_name())),
            },
            ExprKind::Index(arr, idx) => {
                let a = self.expr(arr, env)?;
                let i = self.expr(idx, env)?;
                match (a, i) {
                    (Value::Array(a), Value::Int(i)) => {
                        let mut items = a.items.borrow_mut();
                        let len = items.len();
                        let slot = usize::try_from(i)
                            .ok()
                            .and_then(|i| items.get_mut(i))
                            .ok_or_else(|| format!("index {i} out of bounds for length {len}"))?;
                        *slot = v;
                        Ok(())
                    }
                    (a, i) => Err(format!("cannot index {} with {}", a.type_name(), i.type_name())),
                }
            }
            _ => Err("invalid assignment target".into()),
        }
    }

    fn expr(&mut self, e: &Expr, env: &mut HashMap<String, Value>) -> RtResult<Value> {
        Ok(match &e.kind {
            ExprKind::Int(v) => Value::Int(*v),
            ExprKind::Float(v) => Value::Float(*v),
            ExprKind::Str(s) => Value::Str(Rc::from(s.as_str())),
            ExprKind::Null => Value::Null,
            ExprKind::Var(name) => env
                .get(name)
                .cloned()
                .ok_or_else(|| format!("undefined variable `{name}`"))?,
            ExprKind::Field(obj, field) => match self.expr(obj, env)? {
                Value::Object(o) => o
                    .fields
                    .borrow()
                    .iter()
                    .find(|(f, _)| f == field)
                    .map(|(_, v)| v.clone())
                    .ok_or_else(|| format!("`{}` has no field `{field}`", o.type_name))?,
                Value::Null => return Err(format!("null dereference reading `.{field}`")),
                other => return Err(format!("field access on {}", other.type_name())),
            },
            ExprKind::Index(arr, idx) => {
                let a = self.expr(arr, env)?;
                let i = self.expr(idx, env)?;
                match (a, i) {
                    (Value::Array(a), Value::Int(i)) => {
                        let items = a.items.borrow();
                        usize::try_from(i)
                            .ok()
                            .and_then(|i| items.get(i))
                            .cloned()
                            .ok_or_else(|| format!("index {i} out of bounds for length {}", items.len()))?
                    }
                    (Value::Null, _) => return Err("null dereference indexing".into()),
                    (a, i) => {
                        return Err(format!("cannot index {} with {}", a.type_name(), i.type_name()))
                    }
                }
            }
            ExprKind::Call(name, args) => {
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(self.expr(a, env)?);
                }
                match self.builtin(name, &values)? {
                    Some(v) => v,
                    None => self.call(name, values)?,
                }
            }
            ExprKind::New(type_name, inits) => {
                let decl = *self
                    .structs
                    .get(type_name.as_str())
                    .ok_or_else(|| format!("unknown struct `{type_name}`"))?;
                let mut fields: Vec<(String, Value)> =
                    decl.fields.iter().map(|f| (f.clone(), Value::Null)).collect();
                for (field, init) in inits {
                    let v = self.expr(init, env)?;
                    let slot = fields
                        .iter_mut()
                        .find(|(f, _)| f == field)
                        .ok_or_else(|| format!("`{type_name}` has no field `{field}`"))?;
                    slot.1 = v;
                }
                Value::Object(Rc::new(Object {
                    id: self.fresh_id(),
                    type_name: type_name.clone(),
                    fields: RefCell::new(fields),
                }))
            }
            ExprKind::Array(items) => {
                let mut values = Vec::with_capacity(items.len());
                for item in items {
                    values.push(self.expr(item, env)?);
                }
                Value::Array(Rc::new(Array { id: self.fresh_id(), items: RefCell::new(values) }))
            }
            ExprKind::Unary(op, operand) => {
                let v = self.expr(operand, env)?;
                match (op, v) {
                    (UnOp::Neg, Value::Int(x)) => Value::Int(x.wrapping_neg()),
                    (UnOp::Neg, Value::Float(x)) => Value::Float(-x),
                    (UnOp::Not, v) => Value::bool(!v.truthy()),
                    (UnOp::Neg, v) => return Err(format!("cannot negate {}", v.type_name())),
                }
            }
            ExprKind::Binary(BinOp::And, lhs, rhs) => {
                let l = self.expr(lhs, env)?;
                Value::bool(l.truthy() && self.expr(rhs, env)?.truthy())
            }
            ExprKind::Binary(BinOp::Or, lhs, rhs) => {
                let l = self.expr(lhs, env)?;
                Value::bool(l.truthy() || self.expr(rhs, env)?.truthy())
            }
            ExprKind::Binary(op, lhs, rhs) => {
                let l = self.expr(lhs, env)?;
                let r = self.expr(rhs, env)?;
                binary(*op, l, r)?
            }
        })
    }

    fn builtin(&mut self, name: &str, args: &[Value]) -> RtResult<Option<Value>> {
        if self.functions.contains_key(name) {
            return Ok(None);
        }
        let v = match (name, args) {
            ("len", [Value::Array(a)]) => Value::Int(a.items.borrow().len() as i64),
            ("len", [Value::Str(s)]) => Value::Int(s.chars().count() as i64),
            ("len", [Value::Null]) => return Err("null dereference in len".into()),
            ("rand", [Value::Int(lo), Value::Int(hi)]) => {
                if lo > hi {
                    return Err(format!("rand: empty range {lo}..={hi}"));
                }
                Value::Int(self.rng.range(*lo, *hi))
            }
            ("push", [Value::Array(a), v]) => {
                a.items.borrow_mut().push(v.clone());
                Value::Null
            }
            ("len" | "rand" | "push", _) => {
                return Err(format!("bad arguments to builtin `{name}`"));
            }
            _ => return Ok(None),
        };
        Ok(Some(v))
    }
}

fn binary(op: BinOp, l: Value, r: Value) -> RtResult<Value> {
    use Value::*;
    let cmp = |o: std::cmp::Ordering| -> Value {
        use std::cmp::Ordering::*;
        Value::bool(match op {
            BinOp::Lt => o == Less,
            BinOp::Le => o != Greater,
            BinOp::Gt => o == Greater,
            BinOp::Ge => o != Less,
            _ => unreachable!(),
        })
    };
    Ok(match op {
        BinOp::Eq => Value::bool(values_equal(&l, &r)),
        BinOp::Ne => Value::bool(!values_equal(&l, &r)),
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => match (&l, &r) {
            (Int(a), Int(b)) => cmp(a.cmp(b)),
            (Str(a), Str(b)) => cmp(a.cmp(b)),
            _ => match (as_f64(&l), as_f64(&r)) {
                (Some(a), Some(b)) => match a.partial_cmp(&b) {
                    Some(o) => cmp(o),
                    None => Value::bool(false),
                },
                _ => return Err(format!("cannot compare {} and {}", l.type_name(), r.type_name())),
            },
        },
        BinOp::Add => match (&l, &r) {
            (Str(a), Str(b)) => Str(Rc::from(format!("{a}{b}").as_str())),
            (Int(a), Int(b)) => Int(a.wrapping_add(*b)),
            _ => float_op(&l, &r, |a, b| a + b)?,
        },
        BinOp::Sub => match (&l, &r) {
            (Int(a), Int(b)) => Int(a.wrapping_sub(*b)),
            _ => float_op(&l, &r, |a, b| a - b)?,
        },
        BinOp::Mul => match (&l, &r) {
            (Int(a), Int(b)) => Int(a.wrapping_mul(*b)),
            _ => float_op(&l, &r, |a, b| a * b)?,
        },
        BinOp::Div => match (&l, &r) {
            (Int(_), Int(0)) => return Err("integer division by zero".into()),
            (Int(a), Int(b)) => Int(a.wrapping_div(*b)),
            _ => float_op(&l, &r, |a, b| a / b)?,
        },
        BinOp::Rem => match (&l, &r) {
            (Int(_), Int(0)) => return Err("integer remainder by zero".into()),
            (Int(a), Int(b)) => Int(a.wrapping_rem(*b)),
            _ => float_op(&l, &r, |a, b| a % b)?,
        },
        BinOp::And | BinOp::Or => unreachable!("short-circuit operators handled by caller"),
    })
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Int(x) => Some(*x as f64),
        Value::Float(x) => Some(*x),
        _ => None,
    }
}

fn float_op(l: &Value, r: &Value, f: impl Fn(f64, f64) -> f64) -> RtResult<Value> {
    match (as_f64(l), as_f64(r)) {
        (Some(a), Some(b)) => Ok(Value::Float(f(a, b))),
        _ => Err(format!("arithmetic on {} and {}", l.type_name(), r.type_name())),
    }
}

fn values_equal(l: &Value, r: &Value) -> bool {
    match (l, r) {
        (Value::Int(a), Value::Int(b)) => a == b,
        (Value::Str(a), Value::Str(b)) => a == b,
        (Value::Null, Value::Null) => true,
        (Value::Object(a), Value::Object(b)) => a.id == b.id,
        (Value::Array(a), Value::Array(b)) => a.id == b.id,
        _ => match (as_f64(l), as_f64(r)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::parse;

    fn run(src: &str, seed: u64) -> (ExecutionReport, Vec<TraceRecord>) {
        let p = parse(src).unwrap();
        let mut sink = Vec::new();
        let report = run_tests(&p, &p.tests(), &mut sink, seed).unwrap();
        (report, sink)
    }

    #[test]
    fn sampling_examples() {
        assert!(sample_decision(7));
        assert!(!sample_decision(15));
        assert!(sample_decision(2000));
        assert!(sample_decision(10));
        assert!(!sample_decision(110));
        assert!(sample_decision(300));
        assert!(!sample_decision(2500));
        assert!(!sample_decision(0));
    }

    #[test]
    fn sampling_density_bound() {
        let mut count = 0u64;
        for n in 1..=200_000u64 {
            if sample_decision(n) {
                count += 1;
            }
            let decades = ((n.max(10) as f64) / 10.0).log10().ceil() as u64;
            assert!(count <= 10 + 9 * decades, "n={n} count={count}");
        }
    }

    #[test]
    fn abs_entry_and_exit() {
        let (report, recs) = run(
            "fn abs(val) { if (val < 0) { return 0 - val; } return val; }
             fn test_neg() { abs(-5); }",
            0,
        );
        assert_eq!(report.passed(), 1);
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].point, Point::Entry);
        assert_eq!(recs[0].vars, vec![ValueSnapshot::new("val", SnapValue::Int(-5))]);
        assert_eq!(recs[1].point, Point::Exit);
        assert_eq!(recs[1].get("orig(val)"), Some(&SnapValue::Int(-5)));
        assert_eq!(recs[1].get("return"), Some(&SnapValue::Int(5)));
        assert!(recs.iter().all(|r| r.validate().is_ok()));
    }

    #[test]
    fn empty_selection() {
        let p = parse("fn f() {} fn test_a() { f(); }").unwrap();
        let mut sink = Vec::new();
        let report = run_tests(&p, &BTreeSet::new(), &mut sink, 1).unwrap();
        assert!(report.tests.is_empty());
        assert!(sink.is_empty());
    }

    #[test]
    fn call_sampling_over_2500_calls() {
        let (report, recs) = run(
            "fn f(x) { return x; }
             fn test_loop() { i = 0; while (i < 2500) { f(i); i = i + 1; } }",
            0,
        );
        assert_eq!(report.call_counts["f"], 2500);
        assert_eq!(report.traced_calls["f"], 29);
        let traced: Vec<u64> = recs
            .iter()
            .filter(|r| r.point == Point::Entry)
            .map(|r| r.call_index)
            .collect();
        let mut expected: Vec<u64> = (1..=10).collect();
        expected.extend((2..=10).map(|k| k * 10));
        expected.extend((2..=10).map(|k| k * 100));
        expected.push(2000);
        assert_eq!(traced, expected);
    }

    #[test]
    fn runtime_errors_do_not_abort_other_tests() {
        let (report, recs) = run(
            "struct Box { v }
             fn get(b) { return b.v; }
             fn test_a_null() { get(null); }
             fn test_b_ok() { get(new Box { v: 3 }); }",
            0,
        );
        assert_eq!(report.tests.len(), 2);
        assert!(!report.tests[0].passed);
        assert!(report.tests[0].error.as_deref().unwrap().contains("null dereference"));
        assert!(report.tests[1].passed);
        // the failing call still emitted its entry record
        assert_eq!(recs.iter().filter(|r| r.point == Point::Entry).count(), 2);
        assert_eq!(recs.iter().filter(|r| r.point == Point::Exit).count(), 1);
    }

    #[test]
    fn flattening_depth_two() {
        let (_, recs) = run(
            "struct Inner { value, deeper }
             struct Counter { counter }
             fn touch(this) { return 0; }
             fn test_t() {
                 d = new Inner { value: 9 };
                 touch(new Counter { counter: new Inner { value: 0, deeper: d } });
             }",
            0,
        );
        let paths: Vec<&str> = recs[0].vars.iter().map(|v| v.path.as_str()).collect();
        assert_eq!(
            paths,
            ["this", "this.counter", "this.counter.value", "this.counter.deeper"]
        );
        assert!(matches!(recs[0].vars[3].value, SnapValue::Object(_)));
        let exit: Vec<&str> = recs[1].vars.iter().map(|v| v.path.as_str()).collect();
        assert!(exit.contains(&"orig(this.counter.value)"));
        assert!(exit.contains(&"return"));
    }

    #[test]
    fn deterministic_random_inputs() {
        let src = "fn f(x) { return x; }
                   fn test_r() { i = 0; while (i < 20) { f(rand(-100, 100)); i = i + 1; } }";
        let (_, a) = run(src, 42);
        let (_, b) = run(src, 42);
        let (_, c) = run(src, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn mixed_arrays_are_omitted() {
        let (_, recs) = run(
            "fn f(a, b) { return 0; } fn test_m() { f([1, \"x\"], [1, null, 2]); }",
            0,
        );
        let paths: Vec<&str> = recs[0].vars.iter().map(|v| v.path.as_str()).collect();
        assert_eq!(paths, ["b"]);
    }

    #[test]
    fn lcg_is_reproducible() {
        let mut a = Lcg::new(7);
        let first: Vec<u32> = (0..4).map(|_| a.next_u32()).collect();
        let mut b = Lcg::new(7);
        assert_eq!(first, (0..4).map(|_| b.next_u32()).collect::<Vec<_>>());
        let mut r = Lcg::new(1);
        for _ in 0..1000 {
            let v = r.range(-3, 3);
            assert!((-3..=3).contains(&v));
        }
    }

    #[test]
    fn infinite_loop_hits_budget() {
        let (report, _) = run("fn test_spin() { while (1) { } }", 0);
        assert!(report.tests[0].error.as_deref().unwrap().contains("budget"));
    }
}
