//! Trace records, their line-delimited on-disk form, and composition of
//! per-test trace files into split trace sets.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("no trace file for test `{0}`")]
    MissingTrace(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Point {
    Entry,
    Exit,
}

impl Point {
    pub fn as_str(self) -> &'static str {
        match self {
            Point::Entry => "entry",
            Point::Exit => "exit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Int,
    Float,
    String,
    Object,
    Array,
    Null,
}

impl ValueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::Int => "int",
            ValueKind::Float => "float",
            ValueKind::String => "string",
            ValueKind::Object => "object",
            ValueKind::Array => "array",
            ValueKind::Null => "null",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "int" => ValueKind::Int,
            "float" => ValueKind::Float,
            "string" => ValueKind::String,
            "object" => ValueKind::Object,
            "array" => ValueKind::Array,
            "null" => ValueKind::Null,
            _ => return None,
        })
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, ValueKind::Int | ValueKind::Float)
    }
}

/// One array element. Nested objects and arrays are recorded by identity only.
#[derive(Debug, Clone, PartialEq)]
pub enum Elem {
    Int(i64),
    Float(f64),
    Str(String),
    Object(u64),
    Array(u64),
    Null,
}

impl Elem {
    pub fn kind(&self) -> ValueKind {
        match self {
            Elem::Int(_) => ValueKind::Int,
            Elem::Float(_) => ValueKind::Float,
            Elem::Str(_) => ValueKind::String,
            Elem::Object(_) => ValueKind::Object,
            Elem::Array(_) => ValueKind::Array,
            Elem::Null => ValueKind::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SnapValue {
    Int(i64),
    Float(f64),
    Str(String),
    Object(u64),
    Array { id: u64, elems: Vec<Elem> },
    Null,
}

impl SnapValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            SnapValue::Int(_) => ValueKind::Int,
            SnapValue::Float(_) => ValueKind::Float,
            SnapValue::Str(_) => ValueKind::String,
            SnapValue::Object(_) => ValueKind::Object,
            SnapValue::Array { .. } => ValueKind::Array,
            SnapValue::Null => ValueKind::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueSnapshot {
    pub path: String,
    pub value: SnapValue,
}

impl ValueSnapshot {
    pub fn new(path: impl Into<String>, value: SnapValue) -> Self {
        ValueSnapshot { path: path.into(), value }
    }

    pub fn kind(&self) -> ValueKind {
        self.value.kind()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub test: String,
    pub method: String,
    pub point: Point,
    pub call_index: u64,
    pub vars: Vec<ValueSnapshot>,
}

pub fn orig_path(path: &str) -> String {
    format!("orig({path})")
}

impl TraceRecord {
    pub fn get(&self, path: &str) -> Option<&SnapValue> {
        self.vars.iter().find(|v| v.path == path).map(|v| &v.value)
    }

    /// Checks the structural invariants a reader must enforce.
    pub fn validate(&self) -> Result<(), String> {
        if self.call_index == 0 {
            return Err("call index must be positive".into());
        }
        if self.test.is_empty() || self.method.is_empty() {
            return Err("empty test or method name".into());
        }
        let mut seen = HashSet::new();
        for v in &self.vars {
            if v.path.is_empty() {
                return Err("empty variable path".into());
            }
            if !seen.insert(v.path.as_str()) {
                return Err(format!("duplicate path `{}`", v.path));
            }
            if let SnapValue::Array { elems, .. } = &v.value {
                let mut kinds = elems.iter().map(Elem::kind).filter(|k| *k != ValueKind::Null);
                if let Some(first) = kinds.next() {
                    if kinds.any(|k| k != first) {
                        return Err(format!("array `{}` mixes element kinds", v.path));
                    }
                }
            }
        }
        match self.point {
            Point::Entry => {
                if let Some(v) = self
                    .vars
                    .iter()
                    .find(|v| v.path == "return" || v.path.starts_with("return.") || v.path.starts_with("orig("))
                {
                    return Err(format!("entry record carries exit-only path `{}`", v.path));
                }
            }
            Point::Exit => {
                if !seen.contains("return") {
                    return Err("exit record without `return`".into());
                }
                for v in &self.vars {
                    let top_level = !v.path.contains('.')
                        && v.path != "return"
                        && !v.path.starts_with("orig(");
                    if top_level && !seen.contains(orig_path(&v.path).as_str()) {
                        return Err(format!("exit record missing `orig({})`", v.path));
                    }
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Line format

#[derive(Serialize, Deserialize)]
struct RawElem {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<Json>,
}

#[derive(Serialize, Deserialize)]
struct RawVar {
    path: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<Json>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    elems: Option<Vec<RawElem>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    test: String,
    method: String,
    point: String,
    call: u64,
    vars: Vec<RawVar>,
}

/// Non-finite floats have no JSON number form and are written as strings.
fn float_to_json(x: f64) -> Json {
    match serde_json::Number::from_f64(x) {
        Some(n) => Json::Number(n),
        None if x.is_nan() => Json::String("NaN".into()),
        None if x > 0.0 => Json::String("inf".into()),
        None => Json::String("-inf".into()),
    }
}

fn float_from_json(v: &Json) -> Option<f64> {
    match v {
        Json::Number(n) => n.as_f64(),
        Json::String(s) => match s.as_str() {
            "NaN" => Some(f64::NAN),
            "inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            _ => None,
        },
        _ => None,
    }
}

fn elem_to_raw(e: &Elem) -> RawElem {
    let value = match e {
        Elem::Int(v) => Some(Json::from(*v)),
        Elem::Float(v) => Some(float_to_json(*v)),
        Elem::Str(s) => Some(Json::String(s.clone())),
        Elem::Object(id) | Elem::Array(id) => Some(Json::from(*id)),
        Elem::Null => None,
    };
    RawElem { kind: e.kind().as_str().to_string(), value }
}

fn elem_from_raw(raw: &RawElem) -> Result<Elem, String> {
    let kind = ValueKind::parse(&raw.kind).ok_or_else(|| format!("unknown kind `{}`", raw.kind))?;
    let bad = || format!("bad {} element value", raw.kind);
    Ok(match (kind, &raw.value) {
        (ValueKind::Null, None) => Elem::Null,
        (ValueKind::Int, Some(v)) => Elem::Int(v.as_i64().ok_or_else(bad)?),
        (ValueKind::Float, Some(v)) => Elem::Float(float_from_json(v).ok_or_else(bad)?),
        (ValueKind::String, Some(Json::String(s))) => Elem::Str(s.clone()),
        (ValueKind::Object, Some(v)) => Elem::Object(v.as_u64().ok_or_else(bad)?),
        (ValueKind::Array, Some(v)) => Elem::Array(v.as_u64().ok_or_else(bad)?),
        _ => return Err(bad()),
    })
}

fn var_to_raw(v: &ValueSnapshot) -> RawVar {
    let mut raw = RawVar {
        path: v.path.clone(),
        kind: v.kind().as_str().to_string(),
        value: None,
        id: None,
        elems: None,
    };
    match &v.value {
        SnapValue::Int(x) => raw.value = Some(Json::from(*x)),
        SnapValue::Float(x) => raw.value = Some(float_to_json(*x)),
        SnapValue::Str(s) => raw.value = Some(Json::String(s.clone())),
        SnapValue::Object(id) => raw.id = Some(*id),
        SnapValue::Array { id, elems } => {
            raw.id = Some(*id);
            raw.elems = Some(elems.iter().map(elem_to_raw).collect());
        }
        SnapValue::Null => {}
    }
    raw
}

fn var_from_raw(raw: &RawVar) -> Result<ValueSnapshot, String> {
    let kind = ValueKind::parse(&raw.kind).ok_or_else(|| format!("unknown kind `{}`", raw.kind))?;
    let bad = || format!("bad {} value at `{}`", raw.kind, raw.path);
    let value = match kind {
        ValueKind::Null => {
            if raw.value.is_some() || raw.id.is_some() || raw.elems.is_some() {
                return Err(bad());
            }
            SnapValue::Null
        }
        ValueKind::Int => SnapValue::Int(raw.value.as_ref().and_then(Json::as_i64).ok_or_else(bad)?),
        ValueKind::Float => {
            SnapValue::Float(raw.value.as_ref().and_then(float_from_json).ok_or_else(bad)?)
        }
        ValueKind::String => match &raw.value {
            Some(Json::String(s)) => SnapValue::Str(s.clone()),
            _ => return Err(bad()),
        },
        ValueKind::Object => SnapValue::Object(raw.id.ok_or_else(bad)?),
        ValueKind::Array => {
            let elems = raw.elems.as_ref().ok_or_else(bad)?;
            SnapValue::Array {
                id: raw.id.ok_or_else(bad)?,
                elems: elems.iter().map(elem_from_raw).collect::<Result<_, _>>()?,
            }
        }
    };
    if !matches!(kind, ValueKind::Int | ValueKind::Float | ValueKind::String) && raw.value.is_some() {
        return Err(bad());
    }
    Ok(ValueSnapshot { path: raw.path.clone(), value })
}

/// Serializes one record as a single JSON line (without the newline).
pub fn record_to_line(r: &TraceRecord) -> String {
    let raw = RawRecord {
        test: r.test.clone(),
        method: r.method.clone(),
        point: r.point.as_str().to_string(),
        call: r.call_index,
        vars: r.vars.iter().map(var_to_raw).collect(),
    };
    serde_json::to_string(&raw).expect("trace records always serialize")
}

pub fn record_from_line(line: &str) -> Result<TraceRecord, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let point = match raw.point.as_str() {
        "entry" => Point::Entry,
        "exit" => Point::Exit,
        other => return Err(format!("unknown point `{other}`")),
    };
    let record = TraceRecord {
        test: raw.test,
        method: raw.method,
        point,
        call_index: raw.call,
        vars: raw.vars.iter().map(var_from_raw).collect::<Result<_, _>>()?,
    };
    record.validate()?;
    Ok(record)
}

pub fn write_records<'a, W, I>(mut out: W, records: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a TraceRecord>,
{
    for r in records {
        out.write_all(record_to_line(r).as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads line-delimited records; blank lines are skipped. Fails on the first
/// malformed or invalid record.
pub fn read_records<R: BufRead>(input: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record =
            record_from_line(&line).map_err(|reason| TraceError::Format { line: i + 1, reason })?;
        records.push(record);
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Trace directories and splits

pub const TRACE_EXTENSION: &str = "trace";

pub fn trace_file(dir: &Path, test: &str) -> std::path::PathBuf {
    dir.join(format!("{test}.{TRACE_EXTENSION}"))
}

pub fn write_trace_file(dir: &Path, test: &str, records: &[TraceRecord]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let file = std::fs::File::create(trace_file(dir, test))?;
    let mut out = std::io::BufWriter::new(file);
    write_records(&mut out, records)?;
    out.flush()
}

/// Loads every `<test>.trace` file in `dir`.
pub fn read_trace_dir(dir: &Path) -> Result<BTreeMap<String, Vec<TraceRecord>>, TraceError> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(TRACE_EXTENSION) {
            continue;
        }
        let Some(test) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        let file = std::io::BufReader::new(std::fs::File::open(&path)?);
        out.insert(test.to_string(), read_records(file)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitTraces {
    pub split_id: usize,
    pub tests: BTreeSet<String>,
    pub records: Vec<TraceRecord>,
}

/// Concatenates the chosen tests' records in test-name order.
pub fn compose_split(
    split_id: usize,
    per_test: &BTreeMap<String, Vec<TraceRecord>>,
    tests: &BTreeSet<String>,
) -> Result<SplitTraces, TraceError> {
    let records = compose_view(per_test, tests)?.into_iter().cloned().collect();
    Ok(SplitTraces { split_id, tests: tests.clone(), records })
}

/// Borrowing form of [`compose_split`].
pub fn compose_view<'a>(
    per_test: &'a BTreeMap<String, Vec<TraceRecord>>,
    tests: &BTreeSet<String>,
) -> Result<Vec<&'a TraceRecord>, TraceError> {
    let mut records = Vec::new();
    for test in tests {
        let recs = per_test
            .get(test)
            .ok_or_else(|| TraceError::MissingTrace(test.clone()))?;
        records.extend(recs.iter());
    }
    Ok(records)
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&record_to_line(self))
    }
}
