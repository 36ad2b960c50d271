//! Parser for the rendered invariant form, e.g. `post abs: return >= 0`.

use super::{Condition, ElemPredicate, Invariant, InvariantError, Predicate, RelOp, Term};

pub fn parse_invariant(text: &str) -> Result<Invariant, InvariantError> {
    let err = |reason: &str| InvariantError::Parse { text: text.to_string(), reason: reason.to_string() };
    let (point, rest) = if let Some(rest) = text.strip_prefix("pre ") {
        (Condition::Pre, rest)
    } else if let Some(rest) = text.strip_prefix("post ") {
        (Condition::Post, rest)
    } else {
        return Err(err("expected `pre` or `post`"));
    };
    let (method, expr) = rest.split_once(": ").ok_or_else(|| err("expected `<method>: `"))?;
    if method.is_empty() {
        return Err(err("empty method name"));
    }
    let mut c = Cursor { s: expr, pos: 0 };
    let predicate = c.predicate().map_err(|r| err(&r))?;
    c.skip_ws();
    if c.pos != c.s.len() {
        return Err(err("trailing input"));
    }
    Ok(Invariant::new(method, point, predicate))
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl Cursor<'_> {
    fn rest(&self) -> &str {
        &self.s[self.pos..]
    }

    fn skip_ws(&mut self) {
        while self.rest().starts_with(' ') {
            self.pos += 1;
        }
    }

    fn eat(&mut self, lit: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lit: &str) -> Result<(), String> {
        if self.eat(lit) {
            Ok(())
        } else {
            Err(format!("expected `{lit}` at offset {}", self.pos))
        }
    }

    fn path(&mut self) -> Result<String, String> {
        self.skip_ws();
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.'))
            .unwrap_or(self.rest().len());
        if len == 0 {
            return Err(format!("expected a path at offset {}", self.pos));
        }
        let p = self.rest()[..len].to_string();
        self.pos += len;
        Ok(p)
    }

    fn term(&mut self) -> Result<Term, String> {
        if self.eat("orig(") {
            let inner = self.term()?;
            self.expect(")")?;
            return Ok(Term::orig(inner));
        }
        if self.eat("len(") {
            let p = self.path()?;
            self.expect(")")?;
            return Ok(Term::Len(p));
        }
        let p = self.path()?;
        Ok(if p == "return" { Term::Return } else { Term::Var(p) })
    }

    fn string(&mut self) -> Result<String, String> {
        self.skip_ws();
        let mut de = serde_json::Deserializer::from_str(self.rest()).into_iter::<String>();
        let s = de
            .next()
            .ok_or("expected a string literal")?
            .map_err(|e| e.to_string())?;
        self.pos += de.byte_offset();
        Ok(s)
    }

    fn int(&mut self) -> Option<i64> {
        self.skip_ws();
        let r = self.rest();
        let len = r
            .char_indices()
            .find(|&(i, c)| !(c.is_ascii_digit() || (i == 0 && c == '-')))
            .map_or(r.len(), |(i, _)| i);
        let v = r[..len].parse().ok()?;
        self.pos += len;
        Some(v)
    }

    fn op(&mut self) -> Result<&'static str, String> {
        for op in ["==", "!=", "<=", ">=", "<", ">"] {
            if self.eat(op) {
                return Ok(op);
            }
        }
        Err(format!("expected an operator at offset {}", self.pos))
    }

    fn elem_predicate(&mut self) -> Result<ElemPredicate, String> {
        self.expect("elem")?;
        let op = self.op()?;
        if op == "!=" {
            self.expect("null")?;
            return Ok(ElemPredicate::NotNull);
        }
        self.skip_ws();
        if op == "==" && self.rest().starts_with('"') {
            return Ok(ElemPredicate::StrEq(self.string()?));
        }
        let c = self.int().ok_or("expected a constant")?;
        Ok(match op {
            "==" => ElemPredicate::NumEq(c),
            ">=" => ElemPredicate::NumGe(c),
            "<=" => ElemPredicate::NumLe(c),
            _ => return Err(format!("operator `{op}` not allowed on elements")),
        })
    }

    fn predicate(&mut self) -> Result<Predicate, String> {
        if self.eat("forall(") {
            let a = self.term()?;
            self.expect(",")?;
            let p = self.elem_predicate()?;
            self.expect(")")?;
            return Ok(Predicate::AllElems(a, p));
        }
        if self.eat("exists(") {
            let a = self.term()?;
            self.expect(",")?;
            self.expect("elem")?;
            self.expect("==")?;
            self.expect("null")?;
            self.expect(")")?;
            return Ok(Predicate::AnyElemNull(a));
        }
        if self.eat("same(") {
            let a = self.term()?;
            self.expect(",")?;
            let b = self.term()?;
            self.expect(")")?;
            return Ok(Predicate::RefEq(a, b));
        }
        if self.eat("contains(") {
            let a = self.term()?;
            self.expect(",")?;
            let t = self.term()?;
            self.expect(")")?;
            return Ok(Predicate::Contains(t, a));
        }
        let t = self.term()?;
        let op = self.op()?;
        self.skip_ws();
        if self.rest().starts_with("null") && matches!(op, "==" | "!=") {
            self.pos += 4;
            return Ok(if op == "==" { Predicate::IsNull(t) } else { Predicate::NotNull(t) });
        }
        if self.rest().starts_with('"') && op == "==" {
            return Ok(Predicate::StrEq(t, self.string()?));
        }
        let save = self.pos;
        if let Some(c) = self.int() {
            return Ok(match op {
                "==" => Predicate::NumEq(t, c),
                ">=" => Predicate::NumGe(t, c),
                "<=" => Predicate::NumLe(t, c),
                _ => return Err(format!("operator `{op}` not allowed with a constant")),
            });
        }
        self.pos = save;
        let rel = match op {
            "==" => RelOp::Eq,
            "<" => RelOp::Lt,
            "<=" => RelOp::Le,
            ">" => RelOp::Gt,
            ">=" => RelOp::Ge,
            _ => return Err(format!("operator `{op}` not allowed between terms")),
        };
        let u = self.term()?;
        Ok(Predicate::Rel(t, rel, u))
    }
}
