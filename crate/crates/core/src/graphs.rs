//! Program graphs: a method's syntax tree with lexical and use-chain edges, a
//! candidate invariant injected as a subtree, and the subtoken vocabulary.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::invariants::{Condition, ElemPredicate, Invariant, Predicate, Term};
use crate::labeler::Label;
use crate::minilang::tree::TreeSpec;
use crate::minilang::{function_tree, NodeKind, Program, SyntaxTree};

pub const MAX_NODES: usize = 500;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("method graph has {0} nodes (limit {MAX_NODES})")]
    MethodTooLarge(usize),
    #[error("graph root is {0}, expected a function")]
    NotAFunction(NodeKind),
    #[error("invariant targets `{invariant}` but graph is for `{graph}`")]
    MethodMismatch { graph: String, invariant: String },
    #[error("graph already carries an injected invariant")]
    AlreadyInjected,
    #[error("graph has no injected invariant")]
    NotInjected,
    #[error("malformed graph: {0}")]
    Malformed(String),
    #[error("graph file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Child,
    Parent,
    NextToken,
    PrevToken,
    NextUse,
    LastUse,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 6] = [
        EdgeKind::Child,
        EdgeKind::Parent,
        EdgeKind::NextToken,
        EdgeKind::PrevToken,
        EdgeKind::NextUse,
        EdgeKind::LastUse,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn inverse(self) -> EdgeKind {
        match self {
            EdgeKind::Child => EdgeKind::Parent,
            EdgeKind::Parent => EdgeKind::Child,
            EdgeKind::NextToken => EdgeKind::PrevToken,
            EdgeKind::PrevToken => EdgeKind::NextToken,
            EdgeKind::NextUse => EdgeKind::LastUse,
            EdgeKind::LastUse => EdgeKind::NextUse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodGraph {
    pub project: String,
    pub method: String,
    /// Rendered form of the injected invariant, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant: Option<String>,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<Edge>,
    pub invariant_nodes: BTreeSet<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Splits an identifier at underscores and lower-to-upper case changes.
pub fn subtokenize(identifier: &str) -> Vec<String> {
    let mut out = Vec::new();
    for part in identifier.split('_') {
        let mut cur = String::new();
        let mut prev_lower = false;
        for c in part.chars() {
            if c.is_uppercase() && prev_lower && !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            prev_lower = c.is_lowercase() || c.is_ascii_digit();
            cur.extend(c.to_lowercase());
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

fn tree_edges(tree: &SyntaxTree) -> Vec<Edge> {
    let mut edges = Vec::new();
    let mut push = |src, dst, kind: EdgeKind| {
        edges.push(Edge { src, dst, kind });
        edges.push(Edge { src: dst, dst: src, kind: kind.inverse() });
    };
    for n in &tree.nodes {
        for &c in &n.children {
            push(n.id, c, EdgeKind::Child);
        }
    }
    let tokens = tree.tokens();
    for w in tokens.windows(2) {
        push(w[0], w[1], EdgeKind::NextToken);
    }
    let mut last: HashMap<&str, usize> = HashMap::new();
    for &t in &tokens {
        let node = &tree.nodes[t];
        if !node.kind.is_identifier() {
            continue;
        }
        let text = node.text.as_deref().unwrap_or_default();
        if let Some(prev) = last.insert(text, t) {
            push(prev, t, EdgeKind::NextUse);
        }
    }
    edges
}

fn graph_from_tree(tree: &SyntaxTree, method: &str, project: &str) -> Result<MethodGraph, GraphError> {
    if tree.len() > MAX_NODES {
        return Err(GraphError::MethodTooLarge(tree.len()));
    }
    Ok(MethodGraph {
        project: project.to_string(),
        method: method.to_string(),
        invariant: None,
        nodes: tree
            .nodes
            .iter()
            .map(|n| GraphNode { id: n.id, kind: n.kind, text: n.text.clone() })
            .collect(),
        edges: tree_edges(tree),
        invariant_nodes: BTreeSet::new(),
        label: None,
        score: None,
    })
}

/// Graph of a method's syntax tree, named after its identifier leaf.
pub fn build_graph(tree: &SyntaxTree, project: &str) -> Result<MethodGraph, GraphError> {
    let root = tree.nodes.first().ok_or_else(|| GraphError::Malformed("empty tree".into()))?;
    if root.kind != NodeKind::Function {
        return Err(GraphError::NotAFunction(root.kind));
    }
    let method = root
        .children
        .iter()
        .map(|&c| &tree.nodes[c])
        .find(|n| n.kind == NodeKind::Identifier)
        .and_then(|n| n.text.clone())
        .unwrap_or_default();
    graph_from_tree(tree, &method, project)
}

/// Graphs of a program's non-test functions, keyed by name.
pub fn program_graphs(program: &Program, project: &str) -> BTreeMap<String, Result<MethodGraph, GraphError>> {
    program
        .functions
        .iter()
        .filter(|f| !f.is_test())
        .map(|f| (f.name.clone(), build_graph(&function_tree(f), project)))
        .collect()
}

/// `base` with `inv` injected and the given label attached.
pub fn labeled_graph(base: &MethodGraph, inv: &Invariant, label: Option<Label>) -> Result<MethodGraph, GraphError> {
    let mut g = inject_invariant(base, inv)?;
    g.label = label;
    Ok(g)
}

impl MethodGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Recovers the syntax tree from the Child edges. Preorder ids make a
    /// node's children ascend in lexical order.
    pub fn tree(&self) -> SyntaxTree {
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            if e.kind == EdgeKind::Child {
                children[e.src].push(e.dst);
            }
        }
        SyntaxTree {
            nodes: self
                .nodes
                .iter()
                .zip(children)
                .map(|(n, mut c)| {
                    c.sort_unstable();
                    crate::minilang::AstNode { id: n.id, kind: n.kind, text: n.text.clone(), children: c }
                })
                .collect(),
        }
    }

    fn anchor(&self) -> Option<usize> {
        self.nodes
            .iter()
            .find(|n| matches!(n.kind, NodeKind::PreconditionAnchor | NodeKind::PostconditionAnchor))
            .map(|n| n.id)
    }

    /// Text-bearing leaves in lexical order, optionally restricted to the
    /// invariant's nodes or to everything else.
    pub fn token_ids(&self, invariant: Option<bool>) -> Vec<usize> {
        self.tree()
            .tokens()
            .into_iter()
            .filter(|t| invariant.is_none_or(|inv| self.invariant_nodes.contains(t) == inv))
            .collect()
    }

    pub fn token_texts(&self) -> Vec<&str> {
        self.token_ids(None)
            .into_iter()
            .map(|t| self.nodes[t].text.as_deref().unwrap_or_default())
            .collect()
    }

    /// Checks dense ids, edge endpoints, edge reciprocity and the size limit.
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.nodes.len() > MAX_NODES {
            return Err(GraphError::MethodTooLarge(self.nodes.len()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(GraphError::Malformed(format!("node {i} has id {}", n.id)));
            }
        }
        let set: BTreeSet<Edge> = self.edges.iter().copied().collect();
        for e in &self.edges {
            if e.src >= self.nodes.len() || e.dst >= self.nodes.len() {
                return Err(GraphError::Malformed(format!("edge {e:?} out of range")));
            }
            if !set.contains(&Edge { src: e.dst, dst: e.src, kind: e.kind.inverse() }) {
                return Err(GraphError::Malformed(format!("edge {e:?} lacks its reciprocal")));
            }
        }
        if let Some(&bad) = self.invariant_nodes.iter().find(|&&i| i >= self.nodes.len()) {
            return Err(GraphError::Malformed(format!("invariant node {bad} out of range")));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Injection

fn path_spec(path: &str) -> TreeSpec {
    let mut parts = path.split('.');
    let head = parts.next().unwrap_or_default();
    let mut spec = if head == "return" {
        TreeSpec::leaf(NodeKind::ReturnLeaf, "return")
    } else {
        TreeSpec::leaf(NodeKind::Identifier, head)
    };
    for field in parts {
        spec = TreeSpec::node(NodeKind::FieldAccess, vec![spec, TreeSpec::leaf(NodeKind::FieldName, field)]);
    }
    spec
}

fn term_spec(t: &Term) -> TreeSpec {
    match t {
        Term::Var(p) => path_spec(p),
        Term::Return => TreeSpec::leaf(NodeKind::ReturnLeaf, "return"),
        Term::Len(p) => TreeSpec::node(
            NodeKind::LenTerm,
            vec![TreeSpec::leaf(NodeKind::LenLeaf, "len"), path_spec(p)],
        ),
        Term::Orig(inner) => TreeSpec::node(
            NodeKind::OrigTerm,
            vec![TreeSpec::leaf(NodeKind::OrigLeaf, "orig"), term_spec(inner)],
        ),
    }
}

fn op(symbol: &str) -> TreeSpec {
    TreeSpec::leaf(NodeKind::Operator, symbol)
}

fn int(c: i64) -> TreeSpec {
    TreeSpec::leaf(NodeKind::IntLit, c.to_string())
}

fn null() -> TreeSpec {
    TreeSpec::leaf(NodeKind::NullLit, "null")
}

fn binary(lhs: TreeSpec, symbol: &str, rhs: TreeSpec) -> TreeSpec {
    TreeSpec::node(NodeKind::BinaryExpr, vec![lhs, op(symbol), rhs])
}

/// Expression subtree of an invariant's predicate.
pub fn invariant_spec(inv: &Invariant) -> TreeSpec {
    use NodeKind as K;
    use Predicate::*;
    let quantified = |word: &str, arr: &Term, body: Vec<TreeSpec>| {
        let mut elem = vec![TreeSpec::leaf(K::ElemLeaf, "elem")];
        elem.extend(body);
        TreeSpec::node(
            K::Quantifier,
            vec![TreeSpec::leaf(K::QuantifierLeaf, word), term_spec(arr), TreeSpec::node(K::ElemPredicate, elem)],
        )
    };
    match &inv.predicate {
        IsNull(t) => binary(term_spec(t), "==", null()),
        NotNull(t) => binary(term_spec(t), "!=", null()),
        StrEq(t, s) => binary(term_spec(t), "==", TreeSpec::leaf(K::StrLit, s)),
        NumEq(t, c) => binary(term_spec(t), "==", int(*c)),
        NumGe(t, c) => binary(term_spec(t), ">=", int(*c)),
        NumLe(t, c) => binary(term_spec(t), "<=", int(*c)),
        Rel(a, r, b) => binary(term_spec(a), r.symbol(), term_spec(b)),
        AllElems(a, p) => {
            let body = match p {
                ElemPredicate::NotNull => vec![op("!="), null()],
                ElemPredicate::StrEq(s) => vec![op("=="), TreeSpec::leaf(K::StrLit, s)],
                ElemPredicate::NumEq(c) => vec![op("=="), int(*c)],
                ElemPredicate::NumGe(c) => vec![op(">="), int(*c)],
                ElemPredicate::NumLe(c) => vec![op("<="), int(*c)],
            };
            quantified("forall", a, body)
        }
        AnyElemNull(a) => quantified("exists", a, vec![op("=="), null()]),
        RefEq(a, b) => TreeSpec::node(
            K::RefEqExpr,
            vec![TreeSpec::leaf(K::RefEqLeaf, "same"), term_spec(a), term_spec(b)],
        ),
        Contains(t, a) => TreeSpec::node(
            K::ContainsExpr,
            vec![TreeSpec::leaf(K::ContainsLeaf, "contains"), term_spec(a), term_spec(t)],
        ),
    }
}

fn body_mut(spec: &mut TreeSpec) -> Result<&mut TreeSpec, GraphError> {
    spec.children
        .iter_mut()
        .rev()
        .find(|c| c.kind == NodeKind::Block)
        .ok_or_else(|| GraphError::Malformed("function has no body".into()))
}

fn subtree_ids(tree: &SyntaxTree, root: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        out.insert(id);
        stack.extend(&tree.nodes[id].children);
    }
    out
}

/// Places the invariant under an anchor at the start (pre) or end (post) of
/// the method body and rebuilds every edge.
pub fn inject_invariant(graph: &MethodGraph, inv: &Invariant) -> Result<MethodGraph, GraphError> {
    if graph.method != inv.method {
        return Err(GraphError::MethodMismatch { graph: graph.method.clone(), invariant: inv.method.clone() });
    }
    if graph.anchor().is_some() {
        return Err(GraphError::AlreadyInjected);
    }
    let mut spec = graph.tree().to_spec();
    let body = body_mut(&mut spec)?;
    let (kind, at) = match inv.point {
        Condition::Pre => (NodeKind::PreconditionAnchor, 0),
        Condition::Post => (NodeKind::PostconditionAnchor, body.children.len()),
    };
    body.children.insert(at, TreeSpec::node(kind, vec![invariant_spec(inv)]));
    let tree = SyntaxTree::from_spec(&spec);
    let mut out = graph_from_tree(&tree, &graph.method, &graph.project)?;
    let anchor = out.anchor().expect("anchor was just inserted");
    let mut ids = subtree_ids(&tree, anchor);
    ids.remove(&anchor);
    out.invariant_nodes = ids;
    out.invariant = Some(inv.to_string());
    out.label = graph.label;
    out.score = graph.score;
    Ok(out)
}

/// Drops the anchor subtree and recomputes edges.
pub fn remove_invariant(graph: &MethodGraph) -> Result<MethodGraph, GraphError> {
    graph.anchor().ok_or(GraphError::NotInjected)?;
    let mut spec = graph.tree().to_spec();
    let body = body_mut(&mut spec)?;
    body.children
        .retain(|c| !matches!(c.kind, NodeKind::PreconditionAnchor | NodeKind::PostconditionAnchor));
    let mut out = graph_from_tree(&SyntaxTree::from_spec(&spec), &graph.method, &graph.project)?;
    out.label = graph.label;
    out.score = graph.score;
    Ok(out)
}

/// The injected invariant's expression alone, with its own edges; every node
/// is an invariant node.
pub fn invariant_only(graph: &MethodGraph) -> Result<MethodGraph, GraphError> {
    let anchor = graph.anchor().ok_or(GraphError::NotInjected)?;
    let tree = graph.tree();
    let root = *tree.nodes[anchor]
        .children
        .first()
        .ok_or_else(|| GraphError::Malformed("empty anchor".into()))?;
    let sub = SyntaxTree::from_spec(&tree.spec_at(root));
    let mut out = graph_from_tree(&sub, &graph.method, &graph.project)?;
    out.invariant_nodes = (0..out.len()).collect();
    out.invariant = graph.invariant.clone();
    out.label = graph.label;
    out.score = graph.score;
    Ok(out)
}

pub fn write_graphs<'a, W, I>(mut out: W, graphs: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a MethodGraph>,
{
    for g in graphs {
        serde_json::to_writer(&mut out, g)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_graphs<R: BufRead>(input: R) -> Result<Vec<MethodGraph>, GraphError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |reason: String| GraphError::Format { line: i + 1, reason };
        let g: MethodGraph = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        g.validate().map_err(|e| fail(e.to_string()))?;
        out.push(g);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Vocabulary and encoding

pub const UNKNOWN: usize = 0;
pub const UNKNOWN_TOKEN: &str = "<unknown>";
const MIN_COUNT: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Index order; position 0 is the unknown token.
    pub subtokens: Vec<String>,
    pub counts: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_counts(counts: &BTreeMap<String, usize>) -> Self {
        let mut kept: Vec<(&String, usize)> =
            counts.iter().filter(|(_, &c)| c >= MIN_COUNT).map(|(s, &c)| (s, c)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut subtokens = vec![UNKNOWN_TOKEN.to_string()];
        let mut kept_counts = vec![0];
        for (s, c) in kept {
            subtokens.push(s.clone());
            kept_counts.push(c);
        }
        Vocabulary::from_parts(subtokens, kept_counts)
    }

    pub fn from_parts(subtokens: Vec<String>, counts: Vec<usize>) -> Self {
        let index = subtokens.iter().enumerate().skip(1).map(|(i, s)| (s.clone(), i)).collect();
        Vocabulary { subtokens, counts, index }
    }

    /// Restores the lookup table after deserialization.
    pub fn reindex(self) -> Self {
        Vocabulary::from_parts(self.subtokens, self.counts)
    }

    pub fn len(&self) -> usize {
        self.subtokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtokens.len() <= 1
    }

    pub fn subtoken(&self, s: &str) -> usize {
        self.index.get(s).copied().unwrap_or(UNKNOWN)
    }

    pub fn n_kinds(&self) -> usize {
        NodeKind::ALL.len()
    }

    pub fn kind(&self, k: NodeKind) -> usize {
        NodeKind::ALL.iter().position(|&x| x == k).expect("every kind is listed")
    }

    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        subtokenize(text).iter().map(|s| self.subtoken(s)).collect()
    }

    pub fn encode(&self, g: &MethodGraph) -> EncodedGraph {
        let mut edges: [Vec<(usize, usize)>; 6] = Default::default();
        for e in &g.edges {
            edges[e.kind.index()].push((e.src, e.dst));
        }
        let tokens = |inv: bool| {
            g.token_ids(Some(inv))
                .into_iter()
                .flat_map(|t| self.encode_text(g.nodes[t].text.as_deref().unwrap_or_default()))
                .collect()
        };
        EncodedGraph {
            kinds: g.nodes.iter().map(|n| self.kind(n.kind)).collect(),
            subtokens: g
                .nodes
                .iter()
                .map(|n| n.text.as_deref().map(|t| self.encode_text(t)).unwrap_or_default())
                .collect(),
            edges,
            invariant_nodes: g.invariant_nodes.iter().copied().collect(),
            method_tokens: tokens(false),
            invariant_tokens: tokens(true),
            label: g.label.map(|l| if l.is_valid() { 1.0 } else { 0.0 }),
        }
    }
}

/// Counts subtokens over the text of every node in the training graphs.
pub fn build_vocab<'a, I>(training_graphs: I) -> Vocabulary
where
    I: IntoIterator<Item = &'a MethodGraph>,
{
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for g in training_graphs {
        for n in &g.nodes {
            for s in subtokenize(n.text.as_deref().unwrap_or_default()) {
                *counts.entry(s).or_default() += 1;
            }
        }
    }
    Vocabulary::from_counts(&counts)
}

/// Index form of a graph as consumed by the models.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedGraph {
    pub kinds: Vec<usize>,
    pub subtokens: Vec<Vec<usize>>,
    /// Directed (src, dst) pairs per edge kind.
    pub edges: [Vec<(usize, usize)>; 6],
    pub invariant_nodes: Vec<usize>,
    /// Subtokens of the method's tokens outside the invariant, in lexical order.
    pub method_tokens: Vec<usize>,
    pub invariant_tokens: Vec<usize>,
    pub label: Option<f64>,
}

impl EncodedGraph {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::{function_tree, parse};

    fn graph(src: &str) -> MethodGraph {
        let p = parse(src).unwrap();
        build_graph(&function_tree(&p.functions[0]), "demo").unwrap()
    }

    fn count(g: &MethodGraph, kind: EdgeKind) -> usize {
        g.edges.iter().filter(|e| e.kind == kind).count()
    }

    #[test]
    fn subtokens() {
        assert_eq!(subtokenize("allowedMembers"), ["allowed", "members"]);
        assert_eq!(subtokenize("m_stream"), ["m", "stream"]);
        assert_eq!(subtokenize("x"), ["x"]);
        assert_eq!(subtokenize("__a__B"), ["a", "b"]);
        assert_eq!(subtokenize("HTTPServer"), ["httpserver"]);
        assert_eq!(subtokenize("getX2Value"), ["get", "x2", "value"]);
    }

    #[test]
    fn edge_counts() {
        let g = graph("fn abs(v) { if (v < 0) { return 0 - v; } return v; }");
        let n = g.len();
        let t = g.token_texts().len();
        assert_eq!(count(&g, EdgeKind::Child), n - 1);
        assert_eq!(count(&g, EdgeKind::Parent), n - 1);
        assert_eq!(count(&g, EdgeKind::NextToken), t - 1);
        assert_eq!(count(&g, EdgeKind::PrevToken), t - 1);
        // v appears as a parameter and three times in the body
        assert_eq!(count(&g, EdgeKind::NextUse), 3);
        assert_eq!(count(&g, EdgeKind::LastUse), 3);
        g.validate().unwrap();
        assert_eq!(g.method, "abs");
    }

    #[test]
    fn three_uses_make_two_links() {
        let g = graph("fn f(v) { return v + v; }");
        assert_eq!(count(&g, EdgeKind::NextUse), 2);
    }

    #[test]
    fn guard_identifier_links_to_injected_leaf() {
        let g = graph("fn close(m_stream) { if (m_stream != null) { flush(m_stream); } }");
        let inv = Invariant::new("close", Condition::Pre, Predicate::NotNull(Term::var("m_stream")));
        let h = inject_invariant(&g, &inv).unwrap();
        let leaf = *h
            .invariant_nodes
            .iter()
            .find(|&&i| h.nodes[i].text.as_deref() == Some("m_stream"))
            .unwrap();
        let next = h
            .edges
            .iter()
            .find(|e| e.src == leaf && e.kind == EdgeKind::NextUse)
            .unwrap()
            .dst;
        assert!(!h.invariant_nodes.contains(&next));
        let tokens = h.token_ids(None);
        let pos = |id| tokens.iter().position(|&t| t == id).unwrap();
        assert!(pos(leaf) < pos(next));
        // the `if` condition's use directly follows the invariant's
        let guard = h
            .nodes
            .iter()
            .find(|n| n.kind == NodeKind::IfStmt)
            .map(|n| n.id)
            .unwrap();
        assert!(next > guard);
    }

    #[test]
    fn empty_body_grows_by_subtree_and_anchor() {
        let g = graph("fn f(p) { }");
        let inv = Invariant::new("f", Condition::Post, Predicate::NumGe(Term::var("p.count"), 0));
        let h = inject_invariant(&g, &inv).unwrap();
        let subtree = invariant_spec(&inv).size();
        assert_eq!(h.len(), g.len() + subtree + 1);
        assert_eq!(h.invariant_nodes.len(), subtree);
        h.validate().unwrap();
    }

    #[test]
    fn precondition_tokens_come_first() {
        let g = graph("fn f(a, b) { a = b; return a; }");
        let inv = Invariant::new("f", Condition::Pre, Predicate::Rel(Term::var("a"), crate::invariants::RelOp::Lt, Term::var("b")));
        let h = inject_invariant(&g, &inv).unwrap();
        let body_start = h.nodes.iter().find(|n| n.kind == NodeKind::Block).unwrap().id;
        let body_tokens: Vec<usize> = h.token_ids(None).into_iter().filter(|&t| t > body_start).collect();
        let n = h.invariant_nodes.iter().filter(|&&i| h.nodes[i].text.is_some()).count();
        assert!(body_tokens[..n].iter().all(|t| h.invariant_nodes.contains(t)));
        assert!(body_tokens[n..].iter().all(|t| !h.invariant_nodes.contains(t)));
    }

    #[test]
    fn removal_restores_original() {
        let g = graph("fn f(a, xs) { while (a < len(xs)) { a = a + 1; } return a; }");
        for pred in [
            Predicate::Rel(Term::Return, crate::invariants::RelOp::Ge, Term::orig(Term::var("a"))),
            Predicate::AllElems(Term::var("xs"), ElemPredicate::NumGe(0)),
            Predicate::Contains(Term::var("a"), Term::var("xs")),
        ] {
            for point in [Condition::Pre, Condition::Post] {
                let inv = Invariant::new("f", point, pred.clone());
                let h = inject_invariant(&g, &inv).unwrap();
                assert_eq!(remove_invariant(&h).unwrap(), g);
                assert!(matches!(inject_invariant(&h, &inv), Err(GraphError::AlreadyInjected)));
            }
        }
    }

    #[test]
    fn invariant_only_ignores_method() {
        let inv = |m: &str| Invariant::new(m, Condition::Pre, Predicate::NotNull(Term::var("p")));
        let a = inject_invariant(&graph("fn f(p) { return 1; }"), &inv("f")).unwrap();
        let b = inject_invariant(&graph("fn g(p) { if (p == null) { return 0; } return 1; }"), &inv("g")).unwrap();
        let (a, b) = (invariant_only(&a).unwrap(), invariant_only(&b).unwrap());
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.invariant_nodes.len(), a.len());
    }

    #[test]
    fn oversize_is_rejected() {
        let body: String = (0..80).map(|i| format!("x = x + {i};")).collect();
        let p = parse(&format!("fn big(x) {{ {body} }}")).unwrap();
        assert!(matches!(
            build_graph(&function_tree(&p.functions[0]), "p"),
            Err(GraphError::MethodTooLarge(_))
        ));
    }

    #[test]
    fn vocabulary_rules() {
        let g1 = graph("fn countItems(items) { return len(items); }");
        let g2 = graph("fn f(x) { return x; }");
        let v = build_vocab([&g1, &g2]);
        assert_eq!(v.subtokens[0], UNKNOWN_TOKEN);
        assert_ne!(v.subtoken("items"), UNKNOWN);
        assert_eq!(v.subtoken("count"), UNKNOWN);
        assert_eq!(v.subtoken("never_seen"), UNKNOWN);
        let empty = build_vocab(std::iter::empty());
        assert_eq!(empty.len(), 1);
        assert_eq!(empty.n_kinds(), NodeKind::ALL.len());
        // ties broken lexicographically after count
        let counts: BTreeMap<String, usize> =
            [("b".into(), 3), ("a".into(), 3), ("c".into(), 5), ("d".into(), 1)].into();
        assert_eq!(Vocabulary::from_counts(&counts).subtokens, [UNKNOWN_TOKEN, "c", "a", "b"]);
    }

    #[test]
    fn file_roundtrip() {
        let g = graph("fn f(p) { return p.next; }");
        let inv = Invariant::new("f", Condition::Post, Predicate::IsNull(Term::var("return.next")));
        let mut h = inject_invariant(&g, &inv).unwrap();
        h.label = Some(Label::Invalid);
        h.score = Some(0.4);
        let mut buf = Vec::new();
        write_graphs(&mut buf, [&g, &h]).unwrap();
        assert_eq!(read_graphs(buf.as_slice()).unwrap(), vec![g, h]);
    }
}
