//! Uniform syntax tree: dense preorder node ids, one node per nonterminal or
//! token. This is the shape consumed by the program-graph builder.

use serde::{Deserialize, Serialize};

use super::ast::*;

macro_rules! node_kinds {
    ($($variant:ident),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum NodeKind {
            $($variant),*
        }

        impl NodeKind {
            pub const ALL: &'static [NodeKind] = &[$(NodeKind::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(NodeKind::$variant => stringify!($variant)),*
                }
            }
        }
    };
}

node_kinds! {
    // method syntax
    Function,
    ParamList,
    Block,
    AssignStmt,
    IfStmt,
    WhileStmt,
    ReturnStmt,
    ExprStmt,
    FieldAccess,
    IndexExpr,
    CallExpr,
    ArgList,
    NewExpr,
    FieldInit,
    ArrayLit,
    UnaryExpr,
    BinaryExpr,
    // tokens
    Keyword,
    Identifier,
    FieldName,
    TypeName,
    Operator,
    IntLit,
    FloatLit,
    StrLit,
    NullLit,
    // injected invariants
    PreconditionAnchor,
    PostconditionAnchor,
    OrigTerm,
    OrigLeaf,
    ReturnLeaf,
    LenTerm,
    LenLeaf,
    Quantifier,
    QuantifierLeaf,
    ElemLeaf,
    ElemPredicate,
    ContainsExpr,
    ContainsLeaf,
    RefEqExpr,
    RefEqLeaf,
}

impl NodeKind {
    /// Leaf kinds that take part in use chains.
    pub fn is_identifier(self) -> bool {
        matches!(self, NodeKind::Identifier | NodeKind::FieldName)
    }
}

impl std::fmt::Display for NodeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub id: usize,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<usize>,
}

impl AstNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Arena tree rooted at node 0.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SyntaxTree {
    pub nodes: Vec<AstNode>,
}

/// Nested builder form; flattened into preorder ids by [`SyntaxTree::from_spec`].
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSpec {
    pub kind: NodeKind,
    pub text: Option<String>,
    pub children: Vec<TreeSpec>,
}

impl TreeSpec {
    pub fn node(kind: NodeKind, children: Vec<TreeSpec>) -> Self {
        TreeSpec { kind, text: None, children }
    }

    pub fn leaf(kind: NodeKind, text: impl Into<String>) -> Self {
        TreeSpec { kind, text: Some(text.into()), children: Vec::new() }
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(TreeSpec::size).sum::<usize>()
    }
}

impl SyntaxTree {
    pub fn from_spec(spec: &TreeSpec) -> Self {
        fn walk(spec: &TreeSpec, nodes: &mut Vec<AstNode>) -> usize {
            let id = nodes.len();
            nodes.push(AstNode {
                id,
                kind: spec.kind,
                text: spec.text.clone(),
                children: Vec::new(),
            });
            let children: Vec<usize> = spec.children.iter().map(|c| walk(c, nodes)).collect();
            nodes[id].children = children;
            id
        }
        let mut nodes = Vec::with_capacity(spec.size());
        walk(spec, &mut nodes);
        SyntaxTree { nodes }
    }

    pub fn to_spec(&self) -> TreeSpec {
        self.spec_at(0)
    }

    pub fn spec_at(&self, id: usize) -> TreeSpec {
        let n = &self.nodes[id];
        TreeSpec {
            kind: n.kind,
            text: n.text.clone(),
            children: n.children.iter().map(|&c| self.spec_at(c)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Text-bearing leaves in lexical (preorder) order.
    pub fn tokens(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.is_leaf() && n.text.is_some())
            .map(|n| n.id)
            .collect()
    }
}

/// Lowers a function to its uniform syntax tree.
pub fn function_tree(f: &Function) -> SyntaxTree {
    SyntaxTree::from_spec(&function_spec(f))
}

pub fn function_spec(f: &Function) -> TreeSpec {
    use NodeKind as K;
    TreeSpec::node(
        K::Function,
        vec![
            TreeSpec::leaf(K::Keyword, "fn"),
            TreeSpec::leaf(K::Identifier, &f.name),
            TreeSpec::node(
                K::ParamList,
                f.params.iter().map(|p| TreeSpec::leaf(K::Identifier, p)).collect(),
            ),
            block_spec(&f.body),
        ],
    )
}

fn block_spec(b: &Block) -> TreeSpec {
    TreeSpec::node(NodeKind::Block, b.stmts.iter().map(stmt_spec).collect())
}

fn stmt_spec(s: &Stmt) -> TreeSpec {
    use NodeKind as K;
    match s {
        Stmt::Assign { target, value } => TreeSpec::node(
            K::AssignStmt,
            vec![expr_spec(target), TreeSpec::leaf(K::Operator, "="), expr_spec(value)],
        ),
        Stmt::If { cond, then, otherwise } => {
            let mut children = vec![TreeSpec::leaf(K::Keyword, "if"), expr_spec(cond), block_spec(then)];
            if let Some(other) = otherwise {
                children.push(TreeSpec::leaf(K::Keyword, "else"));
                children.push(block_spec(other));
            }
            TreeSpec::node(K::IfStmt, children)
        }
        Stmt::While { cond, body } => TreeSpec::node(
            K::WhileStmt,
            vec![TreeSpec::leaf(K::Keyword, "while"), expr_spec(cond), block_spec(body)],
        ),
        Stmt::Return(value) => {
            let mut children = vec![TreeSpec::leaf(K::Keyword, "return")];
            children.extend(value.iter().map(expr_spec));
            TreeSpec::node(K::ReturnStmt, children)
        }
        Stmt::Expr(e) => TreeSpec::node(K::ExprStmt, vec![expr_spec(e)]),
    }
}

fn expr_spec(e: &Expr) -> TreeSpec {
    use NodeKind as K;
    match &e.kind {
        ExprKind::Int(v) => TreeSpec::leaf(K::IntLit, v.to_string()),
        ExprKind::Float(v) => TreeSpec::leaf(K::FloatLit, format!("{v:?}")),
        ExprKind::Str(s) => TreeSpec::leaf(K::StrLit, s),
        ExprKind::Null => TreeSpec::leaf(K::NullLit, "null"),
        ExprKind::Var(name) => TreeSpec::leaf(K::Identifier, name),
        ExprKind::Field(obj, field) => {
            TreeSpec::node(K::FieldAccess, vec![expr_spec(obj), TreeSpec::leaf(K::FieldName, field)])
        }
        ExprKind::Index(arr, idx) => TreeSpec::node(K::IndexExpr, vec![expr_spec(arr), expr_spec(idx)]),
        ExprKind::Call(name, args) => TreeSpec::node(
            K::CallExpr,
            vec![
                TreeSpec::leaf(K::Identifier, name),
                TreeSpec::node(K::ArgList, args.iter().map(expr_spec).collect()),
            ],
        ),
        ExprKind::New(name, inits) => {
            let mut children = vec![TreeSpec::leaf(K::Keyword, "new"), TreeSpec::leaf(K::TypeName, name)];
            children.extend(inits.iter().map(|(field, value)| {
                TreeSpec::node(K::FieldInit, vec![TreeSpec::leaf(K::FieldName, field), expr_spec(value)])
            }));
            TreeSpec::node(K::NewExpr, children)
        }
        ExprKind::Array(items) => TreeSpec::node(K::ArrayLit, items.iter().map(expr_spec).collect()),
        ExprKind::Unary(op, operand) => TreeSpec::node(
            K::UnaryExpr,
            vec![TreeSpec::leaf(K::Operator, op.symbol()), expr_spec(operand)],
        ),
        ExprKind::Binary(op, lhs, rhs) => TreeSpec::node(
            K::BinaryExpr,
            vec![expr_spec(lhs), TreeSpec::leaf(K::Operator, op.symbol()), expr_spec(rhs)],
        ),
    }
}
