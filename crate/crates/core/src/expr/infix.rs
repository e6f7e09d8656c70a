//! Parenthesised infix text for expression trees.
//!
//! Grammar, with features written 1-based (`x1` is feature 0):
//!
//! ```text
//! expr    := 'x' INT
//!          | NAME '(' expr [',' expr] ')'        operators with call notation
//!          | '(' NUM '*' expr ('+'|'-') NUM ')'   lt: a*x+b
//!          | '(' PREFIX expr ')'                  e.g. (-x1), (1/x1)
//!          | '(' expr POSTFIX ')'                 e.g. (x1^2)
//!          | '(' expr INFIX expr ')'              e.g. (x1+x2)
//! ```

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::ops::{Notation, OpId, OperatorSet};
use super::tree::{Affine, ExprTree, Node};
use crate::error::{Error, Result};

/// Rendering precision for `lt` coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// Shortest representation that parses back to the same `f64`.
    Exact,
    /// Rounded to this many significant digits.
    Significant(u8),
}

impl Default for Precision {
    fn default() -> Self {
        Precision::Significant(4)
    }
}

pub fn format_number(v: f64, precision: Precision) -> String {
    let v = match precision {
        Precision::Exact => v,
        Precision::Significant(digits) => {
            let digits = digits.max(1) as usize;
            format!("{:.*e}", digits - 1, v).parse::<f64>().unwrap_or(v)
        }
    };
    format!("{v:?}")
}

pub fn to_infix(tree: &ExprTree, ops: &OperatorSet, precision: Precision) -> Result<String> {
    let mut out = String::new();
    write_node(&tree.root, ops, precision, &mut out)?;
    Ok(out)
}

fn write_node(node: &Node, ops: &OperatorSet, precision: Precision, out: &mut String) -> Result<()> {
    let (op, params, children) = match node {
        Node::Terminal { feature } => {
            out.push('x');
            out.push_str(&(feature + 1).to_string());
            return Ok(());
        }
        Node::Op { op, params, children } => (op, params, children),
    };
    let spec = ops.get(*op)?;
    if children.len() != spec.arity() {
        return Err(Error::InvalidTree {
            op: spec.name.clone(),
            expected: spec.arity(),
            found: children.len(),
        });
    }
    match &spec.notation {
        Notation::Call => {
            out.push_str(&spec.name);
            out.push('(');
            for (i, c) in children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_node(c, ops, precision, out)?;
            }
            out.push(')');
        }
        Notation::Infix(sym) => {
            out.push('(');
            write_node(&children[0], ops, precision, out)?;
            out.push_str(sym);
            write_node(&children[1], ops, precision, out)?;
            out.push(')');
        }
        Notation::Prefix(sym) => {
            out.push('(');
            out.push_str(sym);
            write_node(&children[0], ops, precision, out)?;
            out.push(')');
        }
        Notation::Postfix(sym) => {
            out.push('(');
            write_node(&children[0], ops, precision, out)?;
            out.push_str(sym);
            out.push(')');
        }
        Notation::Affine => {
            let p = params.ok_or(Error::MalformedTree("lt node without parameters"))?;
            out.push('(');
            out.push_str(&format_number(p.a, precision));
            out.push('*');
            write_node(&children[0], ops, precision, out)?;
            if p.b.is_sign_negative() {
                out.push('-');
                out.push_str(&format_number(-p.b, precision));
            } else {
                out.push('+');
                out.push_str(&format_number(p.b, precision));
            }
            out.push(')');
        }
    }
    Ok(())
}

pub fn parse_infix(text: &str, ops: &OperatorSet) -> Result<ExprTree> {
    let mut p = Parser::new(text, ops);
    let root = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(ExprTree::new(root))
}

struct Parser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
    ops: &'a OperatorSet,
    affine: Option<OpId>,
    prefix: Vec<(&'a str, OpId)>,
    postfix: Vec<(&'a str, OpId)>,
    infix: Vec<(&'a str, OpId)>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, ops: &'a OperatorSet) -> Self {
        let mut prefix = Vec::new();
        let mut postfix = Vec::new();
        let mut infix = Vec::new();
        let mut affine = None;
        for (id, spec) in ops.iter() {
            match &spec.notation {
                Notation::Prefix(s) if spec.arity() == 1 => prefix.push((s.as_str(), id)),
                Notation::Postfix(s) if spec.arity() == 1 => postfix.push((s.as_str(), id)),
                Notation::Infix(s) if spec.arity() == 2 => infix.push((s.as_str(), id)),
                Notation::Affine if affine.is_none() => affine = Some(id),
                _ => {}
            }
        }
        // Longest symbol first so that e.g. "**" wins over "*".
        for list in [&mut prefix, &mut postfix, &mut infix] {
            list.sort_by_key(|e| core::cmp::Reverse(e.0.len()));
        }
        Self {
            src: text.as_bytes(),
            text,
            pos: 0,
            ops,
            affine,
            prefix,
            postfix,
            infix,
        }
    }

    fn error(&self, message: &str) -> Error {
        Error::Parse {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.text[self.pos..].starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<()> {
        if self.eat(s) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{s}`")))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                self.parenthesised()
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                    self.pos += 1;
                }
                let name = &self.text[start..self.pos];
                self.skip_ws();
                if self.peek() == Some(b'(') {
                    self.pos += 1;
                    return self.call(name, start);
                }
                self.feature(name, start)
            }
            Some(_) => Err(self.error("expected an expression")),
        }
    }

    fn feature(&mut self, name: &str, start: usize) -> Result<Node> {
        let digits = name.strip_prefix('x').filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()));
        match digits.and_then(|d| d.parse::<usize>().ok()) {
            Some(k) if k >= 1 => Ok(Node::terminal(k - 1)),
            _ => Err(Error::Parse {
                position: start,
                message: format!("`{name}` is not a feature (features are x1, x2, ...)"),
            }),
        }
    }

    fn call(&mut self, name: &str, start: usize) -> Result<Node> {
        let op = self
            .ops
            .iter()
            .find(|(_, s)| s.name == name && s.notation == Notation::Call)
            .map(|(id, s)| (id, s.arity()))
            .ok_or_else(|| Error::Parse {
                position: start,
                message: format!("unknown function `{name}`"),
            })?;
        let mut children = Vec::with_capacity(op.1);
        for i in 0..op.1 {
            if i > 0 {
                self.expect(",")?;
            }
            children.push(self.expr()?);
        }
        self.expect(")")?;
        Ok(Node::Op {
            op: op.0,
            params: None,
            children,
        })
    }

    fn parenthesised(&mut self) -> Result<Node> {
        self.skip_ws();
        if let Some(lt) = self.affine {
            let save = self.pos;
            if let Some(a) = self.number() {
                if self.eat("*") {
                    let child = self.expr()?;
                    let sign = if self.eat("+") {
                        1.0
                    } else if self.eat("-") {
                        -1.0
                    } else {
                        return Err(self.error("expected `+` or `-` in linear transform"));
                    };
                    self.skip_ws();
                    let b = self.number().ok_or_else(|| self.error("expected a number"))?;
                    self.expect(")")?;
                    return Ok(Node::affine(lt, Affine::new(a, sign * b), child));
                }
            }
            self.pos = save;
        }
        for i in 0..self.prefix.len() {
            let (sym, id) = self.prefix[i];
            if self.text[self.pos..].starts_with(sym) {
                let save = self.pos;
                self.pos += sym.len();
                match self.expr() {
                    Ok(child) => {
                        self.expect(")")?;
                        return Ok(Node::unary(id, child));
                    }
                    Err(_) => self.pos = save,
                }
            }
        }
        let left = self.expr()?;
        self.skip_ws();
        if self.eat(")") {
            return Ok(left);
        }
        for i in 0..self.postfix.len() {
            let (sym, id) = self.postfix[i];
            let save = self.pos;
            if self.eat(sym) {
                if self.eat(")") {
                    return Ok(Node::unary(id, left));
                }
                self.pos = save;
            }
        }
        for i in 0..self.infix.len() {
            let (sym, id) = self.infix[i];
            if self.eat(sym) {
                let right = self.expr()?;
                self.expect(")")?;
                return Ok(Node::binary(id, left, right));
            }
        }
        Err(self.error("expected an operator or `)`"))
    }

    /// Signed decimal literal with optional exponent.
    fn number(&mut self) -> Option<f64> {
        let start = self.pos;
        let mut end = start;
        let s = self.src;
        if matches!(s.get(end), Some(b'+' | b'-')) {
            end += 1;
        }
        let digits_start = end;
        while matches!(s.get(end), Some(c) if c.is_ascii_digit()) {
            end += 1;
        }
        if s.get(end) == Some(&b'.') {
            end += 1;
            while matches!(s.get(end), Some(c) if c.is_ascii_digit()) {
                end += 1;
            }
        }
        if end == digits_start || (end == digits_start + 1 && s[digits_start] == b'.') {
            return None;
        }
        if matches!(s.get(end), Some(b'e' | b'E')) {
            let mut e = end + 1;
            if matches!(s.get(e), Some(b'+' | b'-')) {
                e += 1;
            }
            let exp_start = e;
            while matches!(s.get(e), Some(c) if c.is_ascii_digit()) {
                e += 1;
            }
            if e > exp_start {
                end = e;
            }
        }
        let v = self.text[start..end].parse::<f64>().ok()?;
        self.pos = end;
        Some(v)
    }
}
