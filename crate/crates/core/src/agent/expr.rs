//! Expression language used by agent conditions, actions and templates.
//!
//! ```text
//! or    := and (("or" | "||") and)*
//! and   := not (("and" | "&&") not)*
//! not   := "not" not | cmp
//! cmp   := add (("<" | "<=" | ">" | ">=" | "==" | "!=") add)?
//! add   := mul (("+" | "-") mul)*
//! mul   := unary (("*" | "/") unary)*
//! unary := ("-" | "!") unary | atom
//! atom  := number | 'text' | "text" | true | false | null
//!        | abs "(" or ")" | ident | ident "[" 1..4 "]" | "(" or ")"
//! ```

use std::collections::BTreeMap;
use std::fmt;

use crate::codec::{classify_value, Tuple, Value};

/// Names the evaluator resolves from the current event.
pub const BUILTINS: [&str; 7] = ["sensor", "sensor0", "time", "from", "rssi", "t", "tuple"];
const KEYWORDS: [&str; 7] = ["and", "or", "not", "true", "false", "null", "abs"];

#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Num(f64),
    Str(String),
    Bool(bool),
    Null,
}

impl Scalar {
    pub fn truthy(&self) -> bool {
        match self {
            Scalar::Num(n) => *n != 0.0,
            Scalar::Str(s) => !s.is_empty(),
            Scalar::Bool(b) => *b,
            Scalar::Null => false,
        }
    }

    pub fn from_value(v: &Value) -> Scalar {
        match v {
            Value::Formal => Scalar::Null,
            Value::Str(s) => Scalar::Str(s.clone()),
            Value::Int16(i) => Scalar::Num(*i as f64),
            Value::Float32(f) => Scalar::Num(*f as f64),
        }
    }

    /// Converts to a tuple element; booleans become 1/0, null a formal.
    pub fn to_value(&self) -> Result<Value, EvalError> {
        match self {
            Scalar::Num(n) => classify_value(*n).map_err(|e| EvalError(e.to_string())),
            Scalar::Str(s) => Value::string(s.clone()).map_err(|e| EvalError(e.to_string())),
            Scalar::Bool(b) => Ok(Value::Int16(*b as i16)),
            Scalar::Null => Ok(Value::Formal),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Scalar::Num(n) => serde_json::Number::from_f64(*n)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Scalar::Str(s) => serde_json::Value::String(s.clone()),
            Scalar::Bool(b) => serde_json::Value::Bool(*b),
            Scalar::Null => serde_json::Value::Null,
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Option<Scalar> {
        Some(match v {
            serde_json::Value::Number(n) => Scalar::Num(n.as_f64()?),
            serde_json::Value::String(s) => Scalar::Str(s.clone()),
            serde_json::Value::Bool(b) => Scalar::Bool(*b),
            serde_json::Value::Null => Scalar::Null,
            _ => return None,
        })
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Num(n) => write!(f, "{n}"),
            Scalar::Str(s) => f.write_str(s),
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Null => f.write_str("null"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("eval error: {0}")]
pub struct EvalError(pub String);

fn eval_err<T>(msg: impl Into<String>) -> Result<T, EvalError> {
    Err(EvalError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Lit(Scalar),
    Ident(String),
    Elem(usize),
    Neg(Box<Node>),
    Not(Box<Node>),
    Abs(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
}

/// What an expression can see while it runs.
pub trait Scope {
    fn builtin(&self, name: &str) -> Option<Scalar>;
    fn tuple(&self) -> Option<&Tuple>;
    fn var(&self, name: &str) -> Option<Scalar>;
}

/// A parsed expression that remembers its source text.
#[derive(Debug, Clone)]
pub struct Expr {
    src: String,
    node: Node,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.node == other.node
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.src)
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, i: 0 };
        let node = p.or()?;
        if let Some((pos, tok)) = p.tokens.get(p.i) {
            return Err(ParseError {
                pos: *pos,
                msg: format!("unexpected {tok:?}"),
            });
        }
        Ok(Expr {
            src: src.trim().to_string(),
            node,
        })
    }

    pub fn literal(s: Scalar) -> Expr {
        let src = match &s {
            Scalar::Str(t) => format!("'{t}'"),
            other => other.to_string(),
        };
        Expr {
            src,
            node: Node::Lit(s),
        }
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn eval(&self, scope: &dyn Scope) -> Result<Scalar, EvalError> {
        eval(&self.node, scope)
    }

    /// Identifiers that are neither builtins nor keywords.
    pub fn free_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        collect_vars(&self.node, &mut out);
        out
    }
}

fn collect_vars(n: &Node, out: &mut Vec<String>) {
    match n {
        Node::Ident(name) if !BUILTINS.contains(&name.as_str()) => out.push(name.clone()),
        Node::Neg(a) | Node::Not(a) | Node::Abs(a) => collect_vars(a, out),
        Node::Bin(_, a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
        _ => {}
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Str(String),
    Ident(String),
    Sym(&'static str),
}

const SYMBOLS: [&str; 17] = [
    "<=", ">=", "==", "!=", "&&", "||", "<", ">", "+", "-", "*", "/", "(", ")", "[", "]", "!",
];

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let n = text.parse::<f64>().map_err(|_| ParseError {
                pos: start,
                msg: format!("bad number {text:?}"),
            })?;
            out.push((start, Tok::Num(n)));
        } else if c == '\'' || c == '"' {
            let close = src[i + 1..].find(c).ok_or(ParseError {
                pos: start,
                msg: "unterminated string".into(),
            })?;
            out.push((start, Tok::Str(src[i + 1..i + 1 + close].to_string())));
            i += close + 2;
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if let Some(sym) = SYMBOLS.iter().find(|s| src[i..].starts_with(**s)) {
            out.push((start, Tok::Sym(sym)));
            i += sym.len();
        } else {
            return Err(ParseError {
                pos: start,
                msg: format!("unexpected character {c:?}"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.i).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.tokens
            .get(self.i)
            .or(self.tokens.last())
            .map(|(p, _)| *p)
            .unwrap_or(0)
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(x)) if x == w) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.fail(format!("expected {s:?}"))
        }
    }

    fn or(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.and()?;
        while self.eat_word("or") || self.eat_sym("||") {
            lhs = Node::Bin(BinOp::Or, Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.not()?;
        while self.eat_word("and") || self.eat_sym("&&") {
            lhs = Node::Bin(BinOp::And, Box::new(lhs), Box::new(self.not()?));
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Node, ParseError> {
        if self.eat_word("not") {
            return Ok(Node::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Node, ParseError> {
        let lhs = self.add()?;
        let op = match self.peek() {
            Some(Tok::Sym("<")) => BinOp::Lt,
            Some(Tok::Sym("<=")) => BinOp::Le,
            Some(Tok::Sym(">")) => BinOp::Gt,
            Some(Tok::Sym(">=")) => BinOp::Ge,
            Some(Tok::Sym("==")) => BinOp::Eq,
            Some(Tok::Sym("!=")) => BinOp::Ne,
            _ => return Ok(lhs),
        };
        self.i += 1;
        Ok(Node::Bin(op, Box::new(lhs), Box::new(self.add()?)))
    }

    fn add(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.mul()?;
        loop {
            let op = if self.eat_sym("+") {
                BinOp::Add
            } else if self.eat_sym("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.mul()?));
        }
    }

    fn mul(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat_sym("*") {
                BinOp::Mul
            } else if self.eat_sym("/") {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.eat_sym("-") {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat_sym("!") {
            return Ok(Node::Not(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return self.fail("unexpected end of expression");
        };
        self.i += 1;
        match tok {
            Tok::Num(n) => Ok(Node::Lit(Scalar::Num(n))),
            Tok::Str(s) => Ok(Node::Lit(Scalar::Str(s))),
            Tok::Sym("(") => {
                let inner = self.or()?;
                self.expect_sym(")")?;
                Ok(inner)
            }
            Tok::Ident(w) => match w.as_str() {
                "true" => Ok(Node::Lit(Scalar::Bool(true))),
                "false" => Ok(Node::Lit(Scalar::Bool(false))),
                "null" => Ok(Node::Lit(Scalar::Null)),
                "abs" => {
                    self.expect_sym("(")?;
                    let inner = self.or()?;
                    self.expect_sym(")")?;
                    Ok(Node::Abs(Box::new(inner)))
                }
                "and" | "or" | "not" => {
                    self.i -= 1;
                    self.fail(format!("unexpected {w:?}"))
                }
                "t" | "tuple" if self.eat_sym("[") => {
                    let idx = match self.peek() {
                        Some(Tok::Num(n)) if (1.0..=4.0).contains(n) && n.fract() == 0.0 => {
                            *n as usize
                        }
                        _ => return self.fail("tuple index must be 1..4"),
                    };
                    self.i += 1;
                    self.expect_sym("]")?;
                    Ok(Node::Elem(idx))
                }
                _ => Ok(Node::Ident(w)),
            },
            Tok::Sym(s) => {
                self.i -= 1;
                self.fail(format!("unexpected {s:?}"))
            }
        }
    }
}

fn num(v: &Scalar, what: &str) -> Result<f64, EvalError> {
    match v {
        Scalar::Num(n) => Ok(*n),
        other => eval_err(format!("{what} needs a number, got {other:?}")),
    }
}

fn eval(n: &Node, scope: &dyn Scope) -> Result<Scalar, EvalError> {
    match n {
        Node::Lit(s) => Ok(s.clone()),
        Node::Ident(name) => {
            if BUILTINS.contains(&name.as_str()) {
                scope
                    .builtin(name)
                    .ok_or_else(|| EvalError(format!("{name} is not available for this event")))
            } else {
                scope
                    .var(name)
                    .ok_or_else(|| EvalError(format!("undefined identifier {name:?}")))
            }
        }
        Node::Elem(i) => {
            let t = scope
                .tuple()
                .ok_or_else(|| EvalError("event has no tuple".into()))?;
            match t.get(i - 1) {
                Some(v) => Ok(Scalar::from_value(v)),
                None => eval_err(format!("t[{i}] beyond arity {}", t.arity())),
            }
        }
        Node::Neg(a) => Ok(Scalar::Num(-num(&eval(a, scope)?, "-")?)),
        Node::Abs(a) => Ok(Scalar::Num(num(&eval(a, scope)?, "abs")?.abs())),
        Node::Not(a) => Ok(Scalar::Bool(!eval(a, scope)?.truthy())),
        Node::Bin(BinOp::And, a, b) => Ok(Scalar::Bool(
            eval(a, scope)?.truthy() && eval(b, scope)?.truthy(),
        )),
        Node::Bin(BinOp::Or, a, b) => Ok(Scalar::Bool(
            eval(a, scope)?.truthy() || eval(b, scope)?.truthy(),
        )),
        Node::Bin(op, a, b) => {
            let (x, y) = (eval(a, scope)?, eval(b, scope)?);
            binary(*op, &x, &y)
        }
    }
}

fn binary(op: BinOp, x: &Scalar, y: &Scalar) -> Result<Scalar, EvalError> {
    match op {
        BinOp::Eq => return Ok(Scalar::Bool(x == y)),
        BinOp::Ne => return Ok(Scalar::Bool(x != y)),
        _ => {}
    }
    let what = match op {
        BinOp::Add => "+",
        BinOp::Sub => "-",
        BinOp::Mul => "*",
        BinOp::Div => "/",
        _ => "comparison",
    };
    let (a, b) = (num(x, what)?, num(y, what)?);
    Ok(match op {
        BinOp::Add => Scalar::Num(a + b),
        BinOp::Sub => Scalar::Num(a - b),
        BinOp::Mul => Scalar::Num(a * b),
        BinOp::Div if b == 0.0 => return eval_err("division by zero"),
        BinOp::Div => Scalar::Num(a / b),
        BinOp::Lt => Scalar::Bool(a < b),
        BinOp::Le => Scalar::Bool(a <= b),
        BinOp::Gt => Scalar::Bool(a > b),
        BinOp::Ge => Scalar::Bool(a >= b),
        BinOp::Eq | BinOp::Ne | BinOp::And | BinOp::Or => unreachable!(),
    })
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Whether `s` may name an agent variable.
pub fn is_var_name(s: &str) -> bool {
    is_identifier(s) && !BUILTINS.contains(&s) && !KEYWORDS.contains(&s)
}

/// Plain scope for tests and tools.
#[derive(Debug, Default)]
pub struct MapScope {
    pub builtins: BTreeMap<String, Scalar>,
    pub vars: BTreeMap<String, Scalar>,
    pub tuple: Option<Tuple>,
}

impl Scope for MapScope {
    fn builtin(&self, name: &str) -> Option<Scalar> {
        self.builtins.get(name).cloned()
    }

    fn tuple(&self) -> Option<&Tuple> {
        self.tuple.as_ref()
    }

    fn var(&self, name: &str) -> Option<Scalar> {
        self.vars.get(name).cloned()
    }
}
