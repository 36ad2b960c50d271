use std::collections::BTreeSet;

use super::ast::*;
use super::lexer::{tokenize, Position, Token, TokenKind};
use super::{ParseError, SyntaxError};

/// Parses a MiniLang compilation unit. Every non-test function is marked core.
pub fn parse(source: &str) -> Result<Program, ParseError> {
    let tokens = tokenize(source)?;
    let end = end_position(source);
    let mut parser = Parser { tokens, pos: 0, end };
    let mut program = Program::default();
    while !parser.at_end() {
        if parser.peek_is(TokenKind::Keyword, "struct") {
            program.structs.push(parser.struct_decl()?);
        } else if parser.peek_is(TokenKind::Keyword, "fn") {
            program.functions.push(parser.function()?);
        } else {
            return Err(parser.error(["fn", "struct"]).into());
        }
    }

    let mut seen = BTreeSet::new();
    for f in &program.functions {
        if !seen.insert(f.name.as_str()) {
            return Err(ParseError::DuplicateFunction {
                name: f.name.clone(),
                position: f.position,
            });
        }
        if f.is_test() && !f.params.is_empty() {
            return Err(ParseError::TestWithParameters {
                name: f.name.clone(),
                position: f.position,
            });
        }
    }
    let mut structs = BTreeSet::new();
    for s in &program.structs {
        if !structs.insert(s.name.as_str()) {
            return Err(ParseError::DuplicateStruct {
                name: s.name.clone(),
                position: s.position,
            });
        }
    }
    program.core = program
        .functions
        .iter()
        .filter(|f| !f.is_test())
        .map(|f| f.name.clone())
        .collect();
    Ok(program)
}

fn end_position(source: &str) -> Position {
    let mut line = 1;
    let mut column = 1;
    for c in source.chars() {
        if c == '\n' {
            line += 1;
            column = 1;
        } else {
            column += 1;
        }
    }
    Position { line, column }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: Position,
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_is(&self, kind: TokenKind, text: &str) -> bool {
        self.peek().is_some_and(|t| t.kind == kind && t.text == text)
    }

    fn peek_punct(&self, text: &str) -> bool {
        self.peek_is(TokenKind::Punctuation, text)
    }

    fn position(&self) -> Position {
        self.peek().map_or(self.end, |t| t.position)
    }

    fn error<I, S>(&self, expected: I) -> SyntaxError
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SyntaxError::new(self.position(), expected)
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        self.pos += 1;
        t
    }

    fn eat_punct(&mut self, text: &str) -> bool {
        if self.peek_punct(text) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, text: &str) -> Result<Position, SyntaxError> {
        if self.peek_punct(text) {
            Ok(self.bump().position)
        } else {
            Err(self.error([format!("'{text}'")]))
        }
    }

    fn expect_keyword(&mut self, text: &str) -> Result<Position, SyntaxError> {
        if self.peek_is(TokenKind::Keyword, text) {
            Ok(self.bump().position)
        } else {
            Err(self.error([format!("'{text}'")]))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Position), SyntaxError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                let t = self.bump();
                Ok((t.text, t.position))
            }
            _ => Err(self.error(["identifier"])),
        }
    }

    fn struct_decl(&mut self) -> Result<StructDecl, SyntaxError> {
        let position = self.expect_keyword("struct")?;
        let (name, _) = self.expect_ident()?;
        self.expect_punct("{")?;
        let mut fields = Vec::new();
        while !self.peek_punct("}") {
            let (field, at) = self.expect_ident()?;
            if fields.contains(&field) {
                return Err(SyntaxError::new(at, ["distinct field name"]));
            }
            fields.push(field);
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct("}")?;
        Ok(StructDecl { name, fields, position })
    }

    fn function(&mut self) -> Result<Function, SyntaxError> {
        let position = self.expect_keyword("fn")?;
        let (name, _) = self.expect_ident()?;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.peek_punct(")") {
            loop {
                let (p, at) = self.expect_ident()?;
                if params.contains(&p) {
                    return Err(SyntaxError::new(at, ["distinct parameter name"]));
                }
                params.push(p);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        if !self.peek_punct(")") {
            return Err(self.error(["','", "')'"]));
        }
        self.bump();
        let body = self.block()?;
        Ok(Function { name, params, body, position })
    }

    fn block(&mut self) -> Result<Block, SyntaxError> {
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.peek_punct("}") {
            if self.at_end() {
                return Err(self.error(["'}'", "statement"]));
            }
            stmts.push(self.statement()?);
        }
        self.bump();
        Ok(Block { stmts })
    }

    fn statement(&mut self) -> Result<Stmt, SyntaxError> {
        if self.peek_is(TokenKind::Keyword, "if") {
            return self.if_stmt();
        }
        if self.peek_is(TokenKind::Keyword, "while") {
            self.bump();
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let body = self.block()?;
            return Ok(Stmt::While { cond, body });
        }
        if self.peek_is(TokenKind::Keyword, "return") {
            self.bump();
            if self.eat_punct(";") {
                return Ok(Stmt::Return(None));
            }
            let value = self.expr()?;
            self.expect_punct(";")?;
            return Ok(Stmt::Return(Some(value)));
        }
        let expr = self.expr()?;
        if self.peek_punct("=") {
            let at = self.position();
            if !matches!(
                expr.kind,
                ExprKind::Var(_) | ExprKind::Field(..) | ExprKind::Index(..)
            ) {
                return Err(SyntaxError::new(at, ["';'"]));
            }
            self.bump();
            let value = self.expr()?;
            self.expect_punct(";")?;
            return Ok(Stmt::Assign { target: expr, value });
        }
        if !self.peek_punct(";") {
            return Err(self.error(["';'", "'='"]));
        }
        self.bump();
        Ok(Stmt::Expr(expr))
    }

    fn if_stmt(&mut self) -> Result<Stmt, SyntaxError> {
        self.expect_keyword("if")?;
        self.expect_punct("(")?;
        let cond = self.expr()?;
        self.expect_punct(")")?;
        let then = self.block()?;
        let otherwise = if self.peek_is(TokenKind::Keyword, "else") {
            self.bump();
            if self.peek_is(TokenKind::Keyword, "if") {
                Some(Block { stmts: vec![self.if_stmt()?] })
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(Stmt::If { cond, then, otherwise })
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.binary(0)
    }

    fn binary(&mut self, level: usize) -> Result<Expr, SyntaxError> {
        const LEVELS: &[&[(&str, BinOp)]] = &[
            &[("||", BinOp::Or)],
            &[("&&", BinOp::And)],
            &[("==", BinOp::Eq), ("!=", BinOp::Ne)],
            &[("<", BinOp::Lt), ("<=", BinOp::Le), (">", BinOp::Gt), (">=", BinOp::Ge)],
            &[("+", BinOp::Add), ("-", BinOp::Sub)],
            &[("*", BinOp::Mul), ("/", BinOp::Div), ("%", BinOp::Rem)],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let op = LEVELS[level].iter().find(|(text, _)| self.peek_punct(text));
            let Some(&(_, op)) = op else { break };
            let position = self.bump().position;
            let rhs = self.binary(level + 1)?;
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                position,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        let op = if self.peek_punct("-") {
            Some(UnOp::Neg)
        } else if self.peek_punct("!") {
            Some(UnOp::Not)
        } else {
            None
        };
        match op {
            Some(op) => {
                let position = self.bump().position;
                let operand = self.unary()?;
                Ok(Expr { kind: ExprKind::Unary(op, Box::new(operand)), position })
            }
            None => self.postfix(),
        }
    }

    fn postfix(&mut self) -> Result<Expr, SyntaxError> {
        let mut expr = self.primary()?;
        loop {
            if self.peek_punct(".") {
                let position = self.bump().position;
                let (field, _) = self.expect_ident()?;
                expr = Expr { kind: ExprKind::Field(Box::new(expr), field), position };
            } else if self.peek_punct("[") {
                let position = self.bump().position;
                let index = self.expr()?;
                self.expect_punct("]")?;
                expr = Expr {
                    kind: ExprKind::Index(Box::new(expr), Box::new(index)),
                    position,
                };
            } else {
                return Ok(expr);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        const EXPECTED: [&str; 6] = ["identifier", "literal", "'('", "'['", "'new'", "'null'"];
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error(EXPECTED));
        };
        let position = tok.position;
        let kind = match tok.kind {
            TokenKind::IntLiteral => {
                self.bump();
                let v = tok
                    .text
                    .parse::<i64>()
                    .map_err(|_| SyntaxError::new(position, ["64-bit integer"]))?;
                ExprKind::Int(v)
            }
            TokenKind::FloatLiteral => {
                self.bump();
                ExprKind::Float(tok.text.parse().expect("lexer validated float"))
            }
            TokenKind::StringLiteral => {
                self.bump();
                ExprKind::Str(tok.text)
            }
            TokenKind::Keyword if tok.text == "null" => {
                self.bump();
                ExprKind::Null
            }
            TokenKind::Keyword if tok.text == "new" => {
                self.bump();
                let (name, _) = self.expect_ident()?;
                self.expect_punct("{")?;
                let mut inits: Vec<(String, Expr)> = Vec::new();
                while !self.peek_punct("}") {
                    let (field, at) = self.expect_ident()?;
                    if inits.iter().any(|(f, _)| *f == field) {
                        return Err(SyntaxError::new(at, ["distinct field name"]));
                    }
                    self.expect_punct(":")?;
                    let value = self.expr()?;
                    inits.push((field, value));
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct("}")?;
                ExprKind::New(name, inits)
            }
            TokenKind::Identifier => {
                self.bump();
                if self.eat_punct("(") {
                    let args = self.comma_list(")")?;
                    ExprKind::Call(tok.text, args)
                } else {
                    ExprKind::Var(tok.text)
                }
            }
            TokenKind::Punctuation if tok.text == "(" => {
                self.bump();
                let inner = self.expr()?;
                self.expect_punct(")")?;
                return Ok(inner);
            }
            TokenKind::Punctuation if tok.text == "[" => {
                self.bump();
                ExprKind::Array(self.comma_list("]")?)
            }
            _ => return Err(self.error(EXPECTED)),
        };
        Ok(Expr { kind, position })
    }

    fn comma_list(&mut self, close: &str) -> Result<Vec<Expr>, SyntaxError> {
        let mut items = Vec::new();
        if self.eat_punct(close) {
            return Ok(items);
        }
        loop {
            items.push(self.expr()?);
            if self.eat_punct(close) {
                return Ok(items);
            }
            if !self.eat_punct(",") {
                return Err(self.error(["','".to_string(), format!("'{close}'")]));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abs_function() {
        let p = parse("fn abs(v) { if (v < 0) { return 0 - v; } return v; }").unwrap();
        assert_eq!(p.functions.len(), 1);
        let f = &p.functions[0];
        assert_eq!(f.name, "abs");
        assert_eq!(f.params, ["v"]);
        assert_eq!(f.body.stmts.len(), 2);
        assert!(p.core.contains("abs"));
    }

    #[test]
    fn empty_source() {
        let p = parse("").unwrap();
        assert!(p.functions.is_empty());
        assert!(parse("  // only a comment\n").unwrap().functions.is_empty());
    }

    #[test]
    fn malformed_header() {
        let err = parse("fn f( {").unwrap_err();
        let ParseError::Syntax(err) = err else { panic!("{err:?}") };
        assert_eq!(err.position.line, 1);
        assert_eq!(err.position.column, 7);
        assert!(err.expected.contains(&"identifier".to_string()));
    }

    #[test]
    fn precedence() {
        let p = parse("fn f(a, b) { return a + b * 2 < 3 && !a; }").unwrap();
        let Stmt::Return(Some(e)) = &p.functions[0].body.stmts[0] else { panic!() };
        let ExprKind::Binary(BinOp::And, lhs, _) = &e.kind else { panic!("{e:?}") };
        let ExprKind::Binary(BinOp::Lt, sum, _) = &lhs.kind else { panic!() };
        let ExprKind::Binary(BinOp::Add, _, prod) = &sum.kind else { panic!() };
        assert!(matches!(prod.kind, ExprKind::Binary(BinOp::Mul, ..)));
    }

    #[test]
    fn structs_records_and_arrays() {
        let src = r#"
            struct Counter { value, label }
            fn bump(c) { c.value = c.value + 1; return c; }
            fn test_bump() {
                c = new Counter { value: 0, label: "x" };
                xs = [1, 2, 3];
                xs[0] = len(xs);
                bump(c);
            }
        "#;
        let p = parse(src).unwrap();
        assert_eq!(p.structs[0].fields, ["value", "label"]);
        assert_eq!(p.tests().into_iter().collect::<Vec<_>>(), ["test_bump"]);
        assert_eq!(p.core.iter().collect::<Vec<_>>(), ["bump"]);
    }

    #[test]
    fn else_if_chain() {
        let p = parse("fn s(x) { if (x < 0) { return -1; } else if (x > 0) { return 1; } else { return 0; } }")
            .unwrap();
        let Stmt::If { otherwise: Some(b), .. } = &p.functions[0].body.stmts[0] else { panic!() };
        assert!(matches!(b.stmts[0], Stmt::If { otherwise: Some(_), .. }));
    }

    #[test]
    fn program_level_errors() {
        assert!(matches!(
            parse("fn a() {} fn a() {}"),
            Err(ParseError::DuplicateFunction { .. })
        ));
        assert!(matches!(
            parse("fn test_x(y) {}"),
            Err(ParseError::TestWithParameters { .. })
        ));
        assert!(matches!(parse("fn f() { 1 = 2; }"), Err(ParseError::Syntax(_))));
        assert!(matches!(parse("fn f() { return 1 }"), Err(ParseError::Syntax(_))));
        assert!(matches!(parse("let x = 1;"), Err(ParseError::Syntax(_))));
    }
}
