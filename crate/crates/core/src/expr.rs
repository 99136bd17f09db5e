//! Small arithmetic-expression language for user-supplied reactions and
//! spatial coefficient functions.
//!
//! Grammar: `+ - * /`, right-associative `^`, unary minus, parentheses,
//! functions `abs sqrt exp sin cos pow(a, b)`, constants `pi e`, and the
//! variables `x y s t xi1 xi2 nu1 nu2`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    S,
    T,
    Xi1,
    Xi2,
    Nu1,
    Nu2,
}

impl Var {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "x" => Var::X,
            "y" => Var::Y,
            "s" => Var::S,
            "t" => Var::T,
            "xi1" => Var::Xi1,
            "xi2" => Var::Xi2,
            "nu1" => Var::Nu1,
            "nu2" => Var::Nu2,
            _ => return None,
        })
    }

    fn index(self) -> usize {
        self as usize
    }

    pub fn is_spatial(self) -> bool {
        matches!(self, Var::X | Var::Y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Abs,
    Sqrt,
    Exp,
    Sin,
    Cos,
    Pow,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "pow" => Func::Pow,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        if self == Func::Pow {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn eval(&self, vars: &[f64; 8]) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var(v) => vars[v.index()],
            Node::Neg(a) => -a.eval(vars),
            Node::Add(a, b) => a.eval(vars) + b.eval(vars),
            Node::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Node::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Node::Div(a, b) => a.eval(vars) / b.eval(vars),
            Node::Pow(a, b) => a.eval(vars).powf(b.eval(vars)),
            Node::Call(f, args) => {
                let a = args[0].eval(vars);
                match f {
                    Func::Abs => a.abs(),
                    Func::Sqrt => a.sqrt(),
                    Func::Exp => a.exp(),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Pow => a.powf(args[1].eval(vars)),
                }
            }
        }
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Node::Num(_) => {}
            Node::Var(v) => {
                if !out.contains(v) {
                    out.push(*v)
                }
            }
            Node::Neg(a) => a.collect_vars(out),
            Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Node::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }
}

/// Parsed expression; keeps its source text for serialization.
#[derive(Debug, Clone)]
pub struct Expression {
    source: String,
    root: Node,
    vars: Vec<Var>,
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

/// Values of the eight expression variables.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings {
    pub x: [f64; 2],
    pub s: f64,
    pub t: f64,
    pub xi: [f64; 2],
    pub nu: [f64; 2],
}

impl Expression {
    pub fn parse(source: &str) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut p = Parser { tokens, pos: 0 };
        let root = p.expr()?;
        if let Some(tok) = p.peek() {
            return Err(Error::Expression {
                column: tok.column,
                message: format!("unexpected {}", tok.kind.describe()),
            });
        }
        let mut vars = Vec::new();
        root.collect_vars(&mut vars);
        Ok(Self {
            source: source.to_string(),
            root,
            vars,
        })
    }

    /// Parse an expression that may only depend on `x` and `y`.
    pub fn parse_spatial(source: &str) -> Result<Self> {
        let e = Self::parse(source)?;
        if let Some(v) = e.vars.iter().find(|v| !v.is_spatial()) {
            let name = format!("{v:?}").to_lowercase();
            let column = tokenize(source)?
                .into_iter()
                .find(|t| t.kind == TokenKind::Ident(name.clone()))
                .map_or(1, |t| t.column);
            return Err(Error::Expression {
                column,
                message: format!("variable '{name}' not allowed in a function of x and y"),
            });
        }
        Ok(e)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn variables(&self) -> &[Var] {
        &self.vars
    }

    pub fn depends_on(&self, v: Var) -> bool {
        self.vars.contains(&v)
    }

    pub fn eval(&self, b: &Bindings) -> f64 {
        let vars = [
            b.x[0], b.x[1], b.s, b.t, b.xi[0], b.xi[1], b.nu[0], b.nu[1],
        ];
        self.root.eval(&vars)
    }

    pub fn eval_at(&self, x: [f64; 2]) -> f64 {
        self.eval(&Bindings {
            x,
            ..Default::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Num(v) => format!("number {v}"),
            TokenKind::Ident(s) => format!("identifier '{s}'"),
            TokenKind::Op(c) => format!("operator '{c}'"),
            TokenKind::LParen => "'('".into(),
            TokenKind::RParen => "')'".into(),
            TokenKind::Comma => "','".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    column: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| Error::Expression {
                column,
                message: format!("malformed number '{text}'"),
            })?;
            out.push(Token {
                kind: TokenKind::Num(v),
                column,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                kind: TokenKind::Ident(chars[start..i].iter().collect()),
                column,
            });
            continue;
        }
        let kind = match c {
            '+' | '-' | '*' | '/' | '^' => TokenKind::Op(c),
            '(' => TokenKind::LParen,
            ')' => TokenKind::RParen,
            ',' => TokenKind::Comma,
            _ => {
                return Err(Error::Expression {
                    column,
                    message: format!("unexpected character '{c}'"),
                })
            }
        };
        out.push(Token { kind, column });
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn end_column(&self) -> usize {
        self.tokens.last().map_or(1, |t| t.column + 1)
    }

    fn next(&mut self) -> Result<Token> {
        let t = self.tokens.get(self.pos).cloned().ok_or(Error::Expression {
            column: self.end_column(),
            message: "unexpected end of expression".into(),
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn eat_op(&mut self, ops: &[char]) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(c),
                ..
            }) if ops.contains(c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<()> {
        let t = self.next()?;
        if t.kind == kind {
            Ok(())
        } else {
            Err(Error::Expression {
                column: t.column,
                message: format!("expected {}, found {}", kind.describe(), t.kind.describe()),
            })
        }
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op(&['+', '-']) {
            let rhs = self.term()?;
            lhs = if op == '+' {
                Node::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    // term := unary (('*'|'/') unary)*
    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&['*', '/']) {
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Node::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    // unary := '-' unary | power ; so -a^b = -(a^b)
    fn unary(&mut self) -> Result<Node> {
        if self.eat_op(&['-']).is_some() {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op(&['+']).is_some() {
            return self.unary();
        }
        self.power()
    }

    // power := atom ('^' unary)?
    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat_op(&['^']).is_some() {
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let t = self.next()?;
        match t.kind {
            TokenKind::Num(v) => Ok(Node::Num(v)),
            TokenKind::LParen => {
                let e = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(e)
            }
            TokenKind::Ident(name) => {
                if let Some(f) = Func::from_name(&name) {
                    self.expect(TokenKind::LParen)?;
                    let mut args = vec![self.expr()?];
                    while matches!(self.peek(), Some(Token { kind: TokenKind::Comma, .. })) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(TokenKind::RParen)?;
                    if args.len() != f.arity() {
                        return Err(Error::Expression {
                            column: t.column,
                            message: format!(
                                "function '{name}' takes {} argument(s), got {}",
                                f.arity(),
                                args.len()
                            ),
                        });
                    }
                    return Ok(Node::Call(f, args));
                }
                if let Some(v) = Var::from_name(&name) {
                    return Ok(Node::Var(v));
                }
                match name.as_str() {
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "e" => Ok(Node::Num(std::f64::consts::E)),
                    _ => Err(Error::Expression {
                        column: t.column,
                        message: format!("unknown identifier '{name}'"),
                    }),
                }
            }
            other => Err(Error::Expression {
                column: t.column,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, b: Bindings) -> f64 {
        Expression::parse(src).unwrap().eval(&b)
    }

    #[test]
    fn precedence_and_associativity() {
        let b = Bindings::default();
        assert_eq!(ev("1 + 2 * 3", b), 7.0);
        assert_eq!(ev("(1 + 2) * 3", b), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2", b), 512.0);
        assert_eq!(ev("-2 ^ 2", b), -4.0);
        assert_eq!(ev("2 ^ -1", b), 0.5);
        assert_eq!(ev("8 / 4 / 2", b), 1.0);
        assert_eq!(ev("1 - 2 - 3", b), -4.0);
        assert_eq!(ev("1.5e2 + 2E-1", b), 150.2);
    }

    #[test]
    fn functions_constants_and_variables() {
        let b = Bindings {
            x: [0.25, 0.5],
            s: -3.0,
            t: 2.0,
            xi: [1.0, 2.0],
            nu: [3.0, 4.0],
        };
        assert_eq!(ev("abs(s) + pow(t, 3)", b), 11.0);
        assert!((ev("sin(pi * x)", b) - (std::f64::consts::PI * 0.25).sin()).abs() < 1e-15);
        assert_eq!(ev("xi1 + 10*xi2 + 100*nu1 + 1000*nu2", b), 4321.0);
        assert!((ev("exp(1) - e", b)).abs() < 1e-15);
        assert_eq!(ev("sqrt(16)", b), 4.0);
    }

    #[test]
    fn errors_report_columns() {
        let err = |s: &str| match Expression::parse(s) {
            Err(Error::Expression { column, .. }) => column,
            other => panic!("expected error for {s}, got {other:?}"),
        };
        assert_eq!(err("1 + $"), 5);
        assert_eq!(err("1 + foo"), 5);
        assert_eq!(err("(1 + 2"), 7);
        assert_eq!(err("pow(1)"), 1);
        assert_eq!(err("1 2"), 3);
        assert_eq!(err(""), 1);
    }

    #[test]
    fn spatial_parse_rejects_state_variables() {
        assert!(Expression::parse_spatial("x * y + 1").is_ok());
        match Expression::parse_spatial("x + s") {
            Err(Error::Expression { column, .. }) => assert_eq!(column, 5),
            other => panic!("{other:?}"),
        }
        match Expression::parse_spatial("sin(x) + s") {
            Err(Error::Expression { column, .. }) => assert_eq!(column, 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tracks_variables() {
        let e = Expression::parse("s * t + sin(xi1)").unwrap();
        assert!(e.depends_on(Var::S) && e.depends_on(Var::Xi1));
        assert!(!e.depends_on(Var::Nu2));
    }
}
