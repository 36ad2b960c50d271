//! Generator of MiniLang pseudo-projects with test suites and ground-truth
//! invariant labels.
//!
//! Templates:
//! - guard pair: two methods sharing a parameter name; one checks it against
//!   null before use and its tests sometimes pass null, the other dereferences
//!   it and its tests never pass null.
//! - numeric: `abs`, `clamp` and counter-bump bodies with known bounds. With
//!   the sparse coverage profile some of them become sparsity traps whose
//!   tests never reach a boundary.
//! - role: a method storing two object parameters symmetrically. One
//!   parameter's name comes from the project's nullable roles (tests pass
//!   null), the other from its required roles. Only the name tells them apart.
//!
//! Every identifier is a pseudo-word drawn from a per-project pool; pools are
//! disjoint across projects.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::invariants::{Condition, Invariant, Predicate, RelOp, Term};
use crate::labeler::Label;
use crate::minilang::{parse, ParseError, Program};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{0}: not a project directory (missing src/)")]
    NotAProject(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateWeights {
    pub guard_pair: f64,
    pub numeric: f64,
    pub role: f64,
}

impl Default for TemplateWeights {
    fn default() -> Self {
        TemplateWeights { guard_pair: 1.0, numeric: 1.0, role: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    Full,
    /// Fraction of numeric methods whose tests skip a boundary.
    Sparse(f64),
}

impl Default for Coverage {
    fn default() -> Self {
        Coverage::Sparse(0.3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_projects: usize,
    /// Template instances per project; a guard pair counts once.
    pub methods_per_project: usize,
    pub weights: TemplateWeights,
    pub coverage: Coverage,
    pub tests_per_method: usize,
    pub calls_per_test: usize,
    /// Pseudo-words reserved for each project's vernacular.
    pub vocabulary_per_project: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_projects: 8,
            methods_per_project: 40,
            weights: TemplateWeights::default(),
            coverage: Coverage::default(),
            tests_per_method: 3,
            calls_per_test: 6,
            vocabulary_per_project: 40,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let w = &self.weights;
        let ws = [w.guard_pair, w.numeric, w.role];
        if ws.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || ws.iter().sum::<f64>() <= 0.0 {
            return Err(CorpusError::InvalidConfig("weights must be nonnegative with a positive sum".into()));
        }
        if let Coverage::Sparse(p) = self.coverage {
            if !(0.0..=1.0).contains(&p) {
                return Err(CorpusError::InvalidConfig(format!("sparse coverage rate {p} outside [0, 1]")));
            }
        }
        if self.n_projects == 0 || self.tests_per_method == 0 || self.calls_per_test == 0 {
            return Err(CorpusError::InvalidConfig(
                "n_projects, tests_per_method and calls_per_test must be positive".into(),
            ));
        }
        if self.vocabulary_per_project < 16 {
            return Err(CorpusError::InvalidConfig("vocabulary_per_project must be at least 16".into()));
        }
        Ok(())
    }

    fn trap_rate(&self) -> f64 {
        match self.coverage {
            Coverage::Full => 0.0,
            Coverage::Sparse(p) => p,
        }
    }
}

/// One ground-truth fact about a generated method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub project: String,
    pub method: String,
    pub invariant: String,
    pub label: Label,
    pub provenance: String,
    pub structured: Invariant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceFile {
    pub name: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedProject {
    pub name: String,
    pub sources: Vec<SourceFile>,
    pub tests: Vec<SourceFile>,
    pub ground_truth: Vec<GroundTruthRecord>,
}

impl GeneratedProject {
    /// Sources and tests parsed together; the instrumented set is every
    /// function from the source files.
    pub fn program(&self) -> Result<Program, CorpusError> {
        program_from_files(
            self.sources.iter().map(|f| (PathBuf::from(&f.name), f.text.as_str())),
            self.tests.iter().map(|f| (PathBuf::from(&f.name), f.text.as_str())),
        )
    }
}

fn program_from_files<'a>(
    sources: impl Iterator<Item = (PathBuf, &'a str)>,
    tests: impl Iterator<Item = (PathBuf, &'a str)>,
) -> Result<Program, CorpusError> {
    let mut all = String::new();
    let mut core = BTreeSet::new();
    for (path, text) in sources {
        let p = parse(text).map_err(|source| CorpusError::Parse { path: path.clone(), source })?;
        core.extend(p.functions.iter().map(|f| f.name.clone()));
        all.push_str(text);
        all.push('\n');
    }
    for (path, text) in tests {
        parse(text).map_err(|source| CorpusError::Parse { path, source })?;
        all.push_str(text);
        all.push('\n');
    }
    let mut program = parse(&all).map_err(|source| CorpusError::Parse { path: PathBuf::from("<project>"), source })?;
    program.set_core(core);
    Ok(program)
}

// ---------------------------------------------------------------------------
// Vernacular

const CONSONANTS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];
const RESERVED: &[&str] = &[
    "same", "null", "elem", "orig", "len", "rand", "push", "return", "test", "fn", "if", "else",
    "while", "new", "struct", "forall", "exists", "contains",
];

fn pseudo_word<R: Rng>(rng: &mut R) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(*CONSONANTS.choose(rng).unwrap());
        w.push(*VOWELS.choose(rng).unwrap());
    }
    w
}

fn capitalized(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

/// Disjoint word pools, one per project.
fn vernaculars(cfg: &GenConfig) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_7e57);
    let mut used: BTreeSet<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    (0..cfg.n_projects)
        .map(|_| {
            let mut pool = Vec::with_capacity(cfg.vocabulary_per_project);
            while pool.len() < cfg.vocabulary_per_project {
                let w = pseudo_word(&mut rng);
                if used.insert(w.clone()) {
                    pool.push(w);
                }
            }
            pool
        })
        .collect()
}

/// Identifier roles carved out of one project's pool.
struct Lexicon {
    thing: String,
    thing_fields: [String; 2],
    counter: String,
    counter_field: String,
    link: String,
    link_fields: [String; 2],
    nullable_roles: Vec<String>,
    required_roles: Vec<String>,
    /// Remaining words for method and parameter names.
    words: Vec<String>,
}

impl Lexicon {
    fn new(pool: &[String]) -> Self {
        let w = |i: usize| pool[i].clone();
        Lexicon {
            thing: capitalized(&w(0)),
            thing_fields: [w(1), w(2)],
            counter: capitalized(&w(3)),
            counter_field: w(4),
            link: capitalized(&w(5)),
            link_fields: [w(6), w(7)],
            nullable_roles: pool[8..11].to_vec(),
            required_roles: pool[11..14].to_vec(),
            words: pool[14..].to_vec(),
        }
    }
}

// ---------------------------------------------------------------------------
// Templates

#[derive(Clone, Copy, Debug)]
enum Template {
    GuardPair,
    Numeric,
    Role,
}

struct Builder<'a> {
    project: String,
    lex: &'a Lexicon,
    rng: ChaCha8Rng,
    cfg: &'a GenConfig,
    methods: BTreeSet<String>,
    sources: Vec<SourceFile>,
    tests: Vec<SourceFile>,
    truth: Vec<GroundTruthRecord>,
}

impl Builder<'_> {
    fn word(&mut self) -> String {
        self.lex.words.choose(&mut self.rng).unwrap().clone()
    }

    fn method_name(&mut self) -> String {
        loop {
            let name = format!("{}{}", self.word(), capitalized(&self.word()));
            if self.methods.insert(name.clone()) {
                return name;
            }
        }
    }

    fn fact(&mut self, method: &str, point: Condition, predicate: Predicate, label: Label, provenance: &str) {
        let inv = Invariant::new(method, point, predicate);
        self.truth.push(GroundTruthRecord {
            project: self.project.clone(),
            method: method.to_string(),
            invariant: inv.to_string(),
            label,
            provenance: provenance.to_string(),
            structured: inv,
        });
    }

    fn new_thing(&mut self) -> String {
        let [f0, f1] = &self.lex.thing_fields;
        format!("new {} {{ {f0}: rand(0, 9), {f1}: rand(1, 20) }}", self.lex.thing)
    }

    /// A test calling `method` `calls_per_test` times. `setup` binds the
    /// arguments for iteration `i`.
    fn add_test(&mut self, method: &str, k: usize, setup: &str, args: &str) {
        let name = format!("test_{method}_{k}");
        let text = format!(
            "fn {name}() {{\n    i = 0;\n    while (i < {n}) {{\n{setup}        {method}({args});\n        i = i + 1;\n    }}\n}}\n",
            n = self.cfg.calls_per_test,
        );
        self.tests.push(SourceFile { name: format!("{name}.mini"), text });
    }

    fn add_source(&mut self, method: &str, text: String) {
        self.sources.push(SourceFile { name: format!("{method}.mini"), text });
    }

    fn guard_pair(&mut self) {
        let p = self.word();
        let [f0, _] = self.lex.thing_fields.clone();
        let guarded = self.method_name();
        let unguarded = self.method_name();
        let g_body = match self.rng.random_range(0..3) {
            0 => format!("    if ({p} == null) {{\n        return 0;\n    }}\n    return {p}.{f0} + 1;\n"),
            1 => format!("    if ({p} != null) {{\n        return {p}.{f0} * 2;\n    }}\n    return 0 - 1;\n"),
            _ => format!("    r = 0;\n    if ({p} != null) {{\n        r = {p}.{f0};\n    }}\n    return r;\n"),
        };
        let u_body = match self.rng.random_range(0..3) {
            0 => format!("    return {p}.{f0} + 1;\n"),
            1 => format!("    r = {p}.{f0} * 2;\n    return r;\n"),
            _ => format!("    if ({p}.{f0} > 4) {{\n        return {p}.{f0};\n    }}\n    return 0;\n"),
        };
        self.add_source(&guarded, format!("fn {guarded}({p}) {{\n{g_body}}}\n"));
        self.add_source(&unguarded, format!("fn {unguarded}({p}) {{\n{u_body}}}\n"));

        let thing = self.new_thing();
        let null_test = self.rng.random_range(0..self.cfg.tests_per_method);
        for k in 0..self.cfg.tests_per_method {
            let mut setup = format!("        x = {thing};\n");
            if k == null_test {
                setup.push_str("        if (i == 2) {\n            x = null;\n        }\n");
            }
            self.add_test(&guarded, k, &setup, "x");
            self.add_test(&unguarded, k, &format!("        x = {thing};\n"), "x");
        }
        let nn = Predicate::NotNull(Term::var(&p));
        self.fact(&guarded, Condition::Pre, nn.clone(), Label::Invalid, "guard-pair/guarded");
        self.fact(&unguarded, Condition::Pre, nn, Label::Valid, "guard-pair/unguarded");
    }

    fn numeric(&mut self) {
        let trap = self.rng.random_bool(self.cfg.trap_rate());
        let name = self.method_name();
        let v = self.word();
        match self.rng.random_range(0..3) {
            0 => {
                self.add_source(
                    &name,
                    format!("fn {name}({v}) {{\n    if ({v} < 0) {{\n        return 0 - {v};\n    }}\n    return {v};\n}}\n"),
                );
                let range = if trap { "rand(1, 100)" } else { "rand(0 - 100, 100)" };
                for k in 0..self.cfg.tests_per_method {
                    let setup = if !trap && k == 0 {
                        format!("        a = {range};\n        if (i == 0) {{\n            a = 0;\n        }}\n")
                    } else {
                        format!("        a = {range};\n")
                    };
                    self.add_test(&name, k, &setup, "a");
                }
                self.fact(&name, Condition::Post, Predicate::NumGe(Term::Return, 0), Label::Valid, "numeric/abs");
                if trap {
                    self.fact(&name, Condition::Pre, Predicate::NumGe(Term::var(&v), 1), Label::Invalid, "trap/abs-positive-only");
                }
            }
            1 => {
                self.add_source(
                    &name,
                    format!(
                        "fn {name}({v}) {{\n    if ({v} < 0) {{\n        return 0;\n    }}\n    if ({v} > 100) {{\n        return 100;\n    }}\n    return {v};\n}}\n"
                    ),
                );
                let range = if trap { "rand(0, 90)" } else { "rand(0 - 50, 150)" };
                for k in 0..self.cfg.tests_per_method {
                    self.add_test(&name, k, &format!("        a = {range};\n"), "a");
                }
                self.fact(&name, Condition::Post, Predicate::NumGe(Term::Return, 0), Label::Valid, "numeric/clamp");
                self.fact(&name, Condition::Post, Predicate::NumLe(Term::Return, 100), Label::Valid, "numeric/clamp");
                if trap {
                    self.fact(&name, Condition::Pre, Predicate::NumGe(Term::var(&v), 0), Label::Invalid, "trap/clamp-in-range-only");
                }
            }
            _ => {
                let (counter, field) = (self.lex.counter.clone(), self.lex.counter_field.clone());
                self.add_source(
                    &name,
                    format!("fn {name}({v}) {{\n    {v}.{field} = {v}.{field} + 1;\n    return {v}.{field};\n}}\n"),
                );
                let start = if trap { "0" } else { "rand(0, 20)" };
                for k in 0..self.cfg.tests_per_method {
                    let setup = format!("        c = new {counter} {{ {field}: {start} }};\n");
                    self.add_test(&name, k, &setup, "c");
                }
                let path = format!("{v}.{field}");
                self.fact(&name, Condition::Post, Predicate::NumGe(Term::Return, 1), Label::Valid, "numeric/counter");
                self.fact(
                    &name,
                    Condition::Post,
                    Predicate::Rel(Term::Return, RelOp::Gt, Term::orig(Term::var(&path))),
                    Label::Valid,
                    "numeric/counter",
                );
                if trap {
                    self.fact(&name, Condition::Pre, Predicate::NumEq(Term::var(&path), 0), Label::Invalid, "trap/counter-fresh-only");
                }
            }
        }
    }

    fn role(&mut self) {
        let name = self.method_name();
        let required = self.lex.required_roles.choose(&mut self.rng).unwrap().clone();
        let nullable = self.lex.nullable_roles.choose(&mut self.rng).unwrap().clone();
        let mut params = [required.clone(), nullable.clone()];
        if self.rng.random_bool(0.5) {
            params.swap(0, 1);
        }
        let [a, b] = &params;
        let [l, r] = self.lex.link_fields.clone();
        let link = self.lex.link.clone();
        let body = if self.rng.random_bool(0.5) {
            format!("    return new {link} {{ {l}: {a}, {r}: {b} }};\n")
        } else {
            format!("    k = new {link} {{ {l}: {b}, {r}: {a} }};\n    return k;\n")
        };
        self.add_source(&name, format!("fn {name}({a}, {b}) {{\n{body}}}\n"));
        let null_test = self.rng.random_range(0..self.cfg.tests_per_method);
        let thing = self.new_thing();
        for k in 0..self.cfg.tests_per_method {
            let mut setup = format!("        x = {thing};\n        y = {thing};\n");
            if k == null_test {
                setup.push_str("        if (i == 3) {\n            y = null;\n        }\n");
            }
            let args = if params[0] == required { "x, y" } else { "y, x" };
            self.add_test(&name, k, &setup, args);
        }
        self.fact(&name, Condition::Pre, Predicate::NotNull(Term::var(&required)), Label::Valid, "role/required");
        self.fact(&name, Condition::Pre, Predicate::NotNull(Term::var(&nullable)), Label::Invalid, "role/nullable");
    }

    fn structs(&self) -> SourceFile {
        let l = self.lex;
        let mut text = String::new();
        let _ = writeln!(text, "struct {} {{ {}, {} }}", l.thing, l.thing_fields[0], l.thing_fields[1]);
        let _ = writeln!(text, "struct {} {{ {} }}", l.counter, l.counter_field);
        let _ = writeln!(text, "struct {} {{ {}, {} }}", l.link, l.link_fields[0], l.link_fields[1]);
        SourceFile { name: "types.mini".into(), text }
    }
}

pub fn generate(cfg: &GenConfig) -> Result<Vec<GeneratedProject>, CorpusError> {
    cfg.validate()?;
    let pools = vernaculars(cfg);
    let w = &cfg.weights;
    let total = w.guard_pair + w.numeric + w.role;
    Ok(pools
        .iter()
        .enumerate()
        .map(|(i, pool)| {
            let lex = Lexicon::new(pool);
            let mut b = Builder {
                project: format!("project{i:02}"),
                lex: &lex,
                rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
                cfg,
                methods: BTreeSet::new(),
                sources: Vec::new(),
                tests: Vec::new(),
                truth: Vec::new(),
            };
            for _ in 0..cfg.methods_per_project {
                let x = b.rng.random::<f64>() * total;
                let t = if x < w.guard_pair {
                    Template::GuardPair
                } else if x < w.guard_pair + w.numeric {
                    Template::Numeric
                } else {
                    Template::Role
                };
                match t {
                    Template::GuardPair => b.guard_pair(),
                    Template::Numeric => b.numeric(),
                    Template::Role => b.role(),
                }
            }
            let mut sources = vec![b.structs()];
            sources.append(&mut b.sources);
            GeneratedProject { name: b.project, sources, tests: b.tests, ground_truth: b.truth }
        })
        .collect())
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";

pub fn write_corpus(dir: &Path, projects: &[GeneratedProject]) -> Result<(), CorpusError> {
    for p in projects {
        let root = dir.join(&p.name);
        for (sub, files) in [("src", &p.sources), ("tests", &p.tests)] {
            std::fs::create_dir_all(root.join(sub))?;
            for f in files {
                std::fs::write(root.join(sub).join(&f.name), &f.text)?;
            }
        }
        let mut out = Vec::new();
        for r in &p.ground_truth {
            serde_json::to_writer(&mut out, r).map_err(std::io::Error::other)?;
            out.push(b'\n');
        }
        std::fs::write(root.join(GROUND_TRUTH_FILE), out)?;
    }
    Ok(())
}

/// A project read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedProject {
    pub name: String,
    pub program: Program,
}

fn mini_files(dir: &Path) -> Result<Vec<(PathBuf, String)>, CorpusError> {
    let mut files = Vec::new();
    if dir.is_dir() {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("mini") {
                let text = std::fs::read_to_string(&path)?;
                files.push((path, text));
            }
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_project(dir: &Path) -> Result<LoadedProject, CorpusError> {
    if !dir.join("src").is_dir() {
        return Err(CorpusError::NotAProject(dir.to_path_buf()));
    }
    let sources = mini_files(&dir.join("src"))?;
    let tests = mini_files(&dir.join("tests"))?;
    let program = program_from_files(
        sources.iter().map(|(p, t)| (p.clone(), t.as_str())),
        tests.iter().map(|(p, t)| (p.clone(), t.as_str())),
    )?;
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
    Ok(LoadedProject { name, program })
}

/// Every project directory under `dir`, sorted by name.
pub fn load_corpus(dir: &Path) -> Result<Vec<LoadedProject>, CorpusError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    dirs.retain(|d| d.join("src").is_dir());
    dirs.sort();
    dirs.iter().map(|d| load_project(d)).collect()
}

pub fn read_ground_truth(dir: &Path) -> Result<BTreeMap<String, Vec<GroundTruthRecord>>, CorpusError> {
    let mut out = BTreeMap::new();
    for p in load_dirs(dir)? {
        let path = p.join(GROUND_TRUTH_FILE);
        if !path.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&path)?;
        let recs: Vec<GroundTruthRecord> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()
            .map_err(|e| CorpusError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        out.insert(name, recs);
    }
    Ok(out)
}

fn load_dirs(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    dirs.retain(|d| d.is_dir());
    dirs.sort();
    Ok(dirs)
}
