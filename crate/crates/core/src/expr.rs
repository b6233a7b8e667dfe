//! Coefficient expression language.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := NUMBER | IDENT | FUNC '(' args ')' | '(' expr ')' | '-' factor
//! ```
//!
//! Identifiers are `u`, `t`, `x1`..`xd` for coefficients and `r` for radial
//! spectral densities. Functions: `sin cos exp abs sqrt tanh` (one argument)
//! and `clamp(e, lo, hi)`. `sqrt` of a negative number evaluates to 0.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    U,
    /// Spatial coordinate, zero based.
    X(usize),
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Sqrt,
    Tanh,
    Clamp,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "clamp" => Func::Clamp,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Clamp => "clamp",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Clamp => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// Which identifiers an expression may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Context {
    /// `t`, `u` and `x1`..`xd`.
    Coefficient { dimension: usize },
    /// `r` only.
    Density,
}

/// Evaluation point.
#[derive(Debug, Clone, Copy, Default)]
pub struct Point<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub u: f64,
    pub r: f64,
}

impl Node {
    /// Reference tree-walking evaluator.
    pub fn eval(&self, p: &Point<'_>) -> f64 {
        match self {
            Node::Num(c) => *c,
            Node::Var(v) => load(*v, p),
            Node::Neg(e) => -e.eval(p),
            Node::Bin(op, a, b) => binop(*op, a.eval(p), b.eval(p)),
            Node::Call(f, args) => {
                let a = args[0].eval(p);
                if *f == Func::Clamp {
                    clamp(a, args[1].eval(p), args[2].eval(p))
                } else {
                    unary(*f, a)
                }
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Node::Bin(op, ..) => op.precedence(),
            Node::Num(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => 3,
            _ => 4,
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(c) => write!(f, "{c:?}"),
            Node::Var(Var::T) => write!(f, "t"),
            Node::Var(Var::U) => write!(f, "u"),
            Node::Var(Var::R) => write!(f, "r"),
            Node::Var(Var::X(i)) => write!(f, "x{}", i + 1),
            Node::Neg(e) => {
                write!(f, "-")?;
                if e.precedence() < 4 {
                    write!(f, "(")?;
                    e.write(f)?;
                    write!(f, ")")
                } else {
                    e.write(f)
                }
            }
            Node::Bin(op, a, b) => {
                let p = op.precedence();
                let wrap = |n: &Node, f: &mut fmt::Formatter<'_>, paren: bool| {
                    if paren {
                        write!(f, "(")?;
                        n.write(f)?;
                        write!(f, ")")
                    } else {
                        n.write(f)
                    }
                };
                wrap(a, f, a.precedence() < p)?;
                write!(f, " {} ", op.symbol())?;
                wrap(b, f, b.precedence() <= p)
            }
            Node::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    a.write(f)?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f)
    }
}

fn load(v: Var, p: &Point<'_>) -> f64 {
    match v {
        Var::T => p.t,
        Var::U => p.u,
        Var::R => p.r,
        Var::X(i) => p.x[i],
    }
}

fn binop(op: BinOp, a: f64, b: f64) -> f64 {
    match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => a / b,
    }
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

fn unary(f: Func, a: f64) -> f64 {
    match f {
        Func::Sin => a.sin(),
        Func::Cos => a.cos(),
        Func::Exp => a.exp(),
        Func::Abs => a.abs(),
        Func::Sqrt => a.max(0.0).sqrt(),
        Func::Tanh => a.tanh(),
        Func::Clamp => unreachable!(),
    }
}

/// Bounds derived from the operator set: `bound` ≥ sup |f| and `lipschitz`
/// ≥ the Lipschitz constant in `u`, uniformly in the other variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derived {
    pub bound: Option<f64>,
    pub lipschitz: Option<f64>,
}

fn derive(n: &Node) -> Derived {
    let d = |bound, lipschitz| Derived { bound, lipschitz };
    match n {
        Node::Num(c) => d(Some(c.abs()), Some(0.0)),
        Node::Var(Var::U) => d(None, Some(1.0)),
        Node::Var(_) => d(None, Some(0.0)),
        Node::Neg(e) => derive(e),
        Node::Bin(op, a, b) => {
            let (da, db) = (derive(a), derive(b));
            match op {
                BinOp::Add | BinOp::Sub => d(
                    da.bound.zip(db.bound).map(|(x, y)| x + y),
                    da.lipschitz.zip(db.lipschitz).map(|(x, y)| x + y),
                ),
                BinOp::Mul => {
                    let bound = da.bound.zip(db.bound).map(|(x, y)| x * y);
                    // |ab|' ≤ |a|·|b'| + |b|·|a'|, each term vanishing when the
                    // derivative does.
                    let part = |outer: Option<f64>, inner: Option<f64>| match inner {
                        Some(l) if l == 0.0 => Some(0.0),
                        Some(l) => outer.map(|b| b * l),
                        None => None,
                    };
                    let lipschitz = part(da.bound, db.lipschitz)
                        .zip(part(db.bound, da.lipschitz))
                        .map(|(x, y)| x + y);
                    d(bound, lipschitz)
                }
                BinOp::Div => match **b {
                    Node::Num(c) if c != 0.0 => d(da.bound.map(|x| x / c.abs()), da.lipschitz.map(|x| x / c.abs())),
                    _ if da.lipschitz == Some(0.0) && db.lipschitz == Some(0.0) => d(None, Some(0.0)),
                    _ => d(None, None),
                },
            }
        }
        Node::Call(f, args) => {
            let da = derive(&args[0]);
            match f {
                Func::Sin | Func::Cos | Func::Tanh => d(Some(1.0), da.lipschitz),
                Func::Abs => da,
                Func::Exp => match (da.bound, da.lipschitz) {
                    (Some(b), l) => d(Some(b.exp()), l.map(|l| l * b.exp())),
                    (None, Some(l)) if l == 0.0 => d(None, Some(0.0)),
                    _ => d(None, None),
                },
                Func::Sqrt => d(da.bound.map(f64::sqrt), sqrt_lipschitz(&args[0])),
                Func::Clamp => {
                    let lo = derive(&args[1]).bound;
                    let hi = derive(&args[2]).bound;
                    let bound = lo.zip(hi).map(|(a, b)| a.max(b));
                    // Constant limits keep the Lipschitz constant of the argument.
                    let constant = derive(&args[1]).lipschitz == Some(0.0) && derive(&args[2]).lipschitz == Some(0.0);
                    d(bound, if constant { da.lipschitz } else { None })
                }
            }
        }
    }
}

/// `sqrt(c + Σ e_i²)` with `c ≥ 0` is Lipschitz with constant `Σ L(e_i)`.
fn sqrt_lipschitz(arg: &Node) -> Option<f64> {
    if derive(arg).lipschitz == Some(0.0) {
        return Some(0.0);
    }
    let mut terms = Vec::new();
    flatten_sum(arg, &mut terms)?;
    let mut total = 0.0;
    for t in terms {
        match t {
            Node::Num(c) if *c >= 0.0 => {}
            Node::Bin(BinOp::Mul, a, b) if a == b => total += derive(a).lipschitz?,
            _ => return None,
        }
    }
    Some(total)
}

fn flatten_sum<'a>(n: &'a Node, out: &mut Vec<&'a Node>) -> Option<()> {
    match n {
        Node::Bin(BinOp::Add, a, b) => {
            flatten_sum(a, out)?;
            flatten_sum(b, out)
        }
        other => {
            out.push(other);
            Some(())
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Instr {
    Num(f64),
    Load(Var),
    Neg,
    Bin(BinOp),
    Unary(Func),
    Clamp,
}

/// A parsed expression with its compiled stack program.
#[derive(Debug, Clone)]
pub struct Expression {
    pub source: String,
    pub ast: Node,
    pub context: Context,
    pub derived: Derived,
    program: Vec<Instr>,
    depth: usize,
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.ast == other.ast
    }
}

impl Expression {
    pub fn parse(source: &str, context: Context) -> Result<Self> {
        let mut p = Parser::new(source, context);
        let ast = p.expr()?;
        p.skip_ws();
        if let Some(c) = p.peek() {
            return Err(p.error(format!("unexpected '{c}'")));
        }
        let mut program = Vec::new();
        let depth = emit(&ast, &mut program);
        Ok(Self {
            source: source.to_string(),
            derived: derive(&ast),
            ast,
            context,
            program,
            depth,
        })
    }

    pub fn coefficient(source: &str, dimension: usize) -> Result<Self> {
        Self::parse(source, Context::Coefficient { dimension })
    }

    pub fn density(source: &str) -> Result<Self> {
        Self::parse(source, Context::Density)
    }

    /// Canonical text form; parsing it yields the same tree.
    pub fn canonical(&self) -> String {
        self.ast.to_string()
    }

    pub fn eval(&self, p: &Point<'_>) -> f64 {
        let mut stack = [0.0f64; 32];
        if self.depth > stack.len() {
            return self.ast.eval(p);
        }
        let mut sp = 0;
        for ins in &self.program {
            match *ins {
                Instr::Num(c) => {
                    stack[sp] = c;
                    sp += 1;
                }
                Instr::Load(v) => {
                    stack[sp] = load(v, p);
                    sp += 1;
                }
                Instr::Neg => stack[sp - 1] = -stack[sp - 1],
                Instr::Bin(op) => {
                    sp -= 1;
                    stack[sp - 1] = binop(op, stack[sp - 1], stack[sp]);
                }
                Instr::Unary(f) => stack[sp - 1] = unary(f, stack[sp - 1]),
                Instr::Clamp => {
                    sp -= 2;
                    stack[sp - 1] = clamp(stack[sp - 1], stack[sp], stack[sp + 1]);
                }
            }
        }
        stack[0]
    }

    /// True when the expression does not mention `u`.
    pub fn independent_of_u(&self) -> bool {
        !self.program.iter().any(|i| matches!(i, Instr::Load(Var::U)))
    }
}

/// Appends the postfix program for `n` and returns the stack depth it needs.
fn emit(n: &Node, out: &mut Vec<Instr>) -> usize {
    match n {
        Node::Num(c) => {
            out.push(Instr::Num(*c));
            1
        }
        Node::Var(v) => {
            out.push(Instr::Load(*v));
            1
        }
        Node::Neg(e) => {
            let d = emit(e, out);
            out.push(Instr::Neg);
            d
        }
        Node::Bin(op, a, b) => {
            let da = emit(a, out);
            let db = emit(b, out);
            out.push(Instr::Bin(*op));
            da.max(db + 1)
        }
        Node::Call(f, args) => {
            let mut depth = 0;
            for (i, a) in args.iter().enumerate() {
                depth = depth.max(emit(a, out) + i);
            }
            out.push(if *f == Func::Clamp { Instr::Clamp } else { Instr::Unary(*f) });
            depth
        }
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    context: Context,
}

impl Parser {
    fn new(src: &str, context: Context) -> Self {
        Self {
            chars: src.chars().collect(),
            pos: 0,
            context,
        }
    }

    fn location(&self, pos: usize) -> (usize, usize) {
        let mut line = 1;
        let mut col = 1;
        for &c in &self.chars[..pos.min(self.chars.len())] {
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        }
        (line, col)
    }

    fn error_at(&self, pos: usize, message: impl Into<String>) -> Error {
        let (line, column) = self.location(pos);
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        self.error_at(self.pos, message)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            return Ok(());
        }
        Err(match self.peek() {
            Some(found) => self.error(format!("expected '{c}', found '{found}'")),
            None => self.error(format!("expected '{c}', found end of input")),
        })
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                BinOp::Add
            } else if self.eat('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        loop {
            let op = if self.eat('*') {
                BinOp::Mul
            } else if self.eat('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.factor()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Node> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some('-') => {
                self.pos += 1;
                Ok(match self.factor()? {
                    Node::Num(c) => Node::Num(-c),
                    other => Node::Neg(Box::new(other)),
                })
            }
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().collect();
                if let Some(f) = Func::from_name(&name) {
                    return self.call(f, start);
                }
                self.variable(&name, start)
            }
            Some(c) => Err(self.error(format!("unexpected '{c}'"))),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.peek().is_some_and(|c| c.is_ascii_digit()) {
                p.pos += 1;
            }
        };
        digits(self);
        if self.peek() == Some('.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+' | '-')) {
                self.pos += 1;
            }
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| self.error_at(start, format!("malformed number '{text}'")))
    }

    fn call(&mut self, f: Func, start: usize) -> Result<Node> {
        self.expect('(')?;
        let mut args = vec![self.expr()?];
        while self.eat(',') {
            args.push(self.expr()?);
        }
        self.expect(')')?;
        if args.len() != f.arity() {
            return Err(self.error_at(
                start,
                format!("{} takes {} argument(s), got {}", f.name(), f.arity(), args.len()),
            ));
        }
        Ok(Node::Call(f, args))
    }

    fn variable(&self, name: &str, start: usize) -> Result<Node> {
        let var = match (self.context, name) {
            (Context::Coefficient { .. }, "u") => Some(Var::U),
            (Context::Coefficient { .. }, "t") => Some(Var::T),
            (Context::Coefficient { dimension }, _) => name
                .strip_prefix('x')
                .and_then(|i| i.parse::<usize>().ok())
                .filter(|&i| (1..=dimension).contains(&i))
                .map(|i| Var::X(i - 1)),
            (Context::Density, "r") => Some(Var::R),
            (Context::Density, _) => None,
        };
        var.map(Node::Var)
            .ok_or_else(|| self.error_at(start, format!("unknown identifier '{name}'")))
    }
}

/// Replaces every identifier `name` in `source` by the literal `value`,
/// leaving other identifiers (such as `lambda2`) alone.
pub fn substitute(source: &str, name: &str, value: f64) -> String {
    let mut out = String::with_capacity(source.len());
    let mut chars = source.char_indices().peekable();
    while let Some((start, c)) = chars.next() {
        if c.is_ascii_alphabetic() || c == '_' {
            let mut end = start + c.len_utf8();
            while let Some(&(i, d)) = chars.peek() {
                if d.is_ascii_alphanumeric() || d == '_' {
                    end = i + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let ident = &source[start..end];
            if ident == name {
                out.push_str(&format!("({value:?})"));
            } else {
                out.push_str(ident);
            }
        } else {
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coef(s: &str) -> Expression {
        Expression::coefficient(s, 2).unwrap()
    }

    fn at(e: &Expression, t: f64, x: &[f64], u: f64) -> f64 {
        e.eval(&Point { t, x, u, r: 0.0 })
    }

    #[test]
    fn precedence_and_evaluation() {
        let e = coef("1 + 2*3 - 4/2");
        assert_eq!(at(&e, 0.0, &[0.0, 0.0], 0.0), 5.0);
        let e = coef("-(u - 1) * x2 + t");
        assert_eq!(at(&e, 0.5, &[0.0, 3.0], 2.0), -2.5);
        let e = coef("clamp(u, -1, 1)");
        assert_eq!(at(&e, 0.0, &[0.0, 0.0], 7.0), 1.0);
        assert_eq!(coef("sqrt(-4)").eval(&Point::default()), 0.0);
    }

    #[test]
    fn derived_constants() {
        let e = coef("0.5*sin(u)");
        assert_eq!(e.derived.bound, Some(0.5));
        assert_eq!(e.derived.lipschitz, Some(0.5));
        let e = coef("sqrt(1+u*u)");
        assert_eq!(e.derived.lipschitz, Some(1.0));
        assert_eq!(coef("sqrt(abs(u))").derived.lipschitz, None);
        assert_eq!(coef("t*x1").derived.lipschitz, Some(0.0));
        assert_eq!(coef("t*u").derived.lipschitz, None);
        assert_eq!(coef("clamp(u, -2, 1)").derived.bound, Some(2.0));
    }

    #[test]
    fn syntax_errors_have_positions() {
        match Expression::coefficient("sin(u", 1) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (1, 6)),
            other => panic!("{other:?}"),
        }
        match Expression::coefficient("u +\n  * 2", 1) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(Expression::coefficient("v + 1", 1), Err(Error::Parse { .. })));
        assert!(matches!(Expression::coefficient("x2", 1), Err(Error::Parse { .. })));
        assert!(matches!(Expression::coefficient("sin(u, 1)", 1), Err(Error::Parse { .. })));
        assert!(matches!(Expression::coefficient("clamp(u)", 1), Err(Error::Parse { .. })));
        assert!(matches!(Expression::density("u"), Err(Error::Parse { .. })));
    }

    #[test]
    fn printing_round_trips() {
        for s in [
            "1 - (2 - 3)",
            "u / (t * 2)",
            "-(u + 1) * -2",
            "u - -1",
            "clamp(x1 - 0.25, -1, 1e-3) + exp(-u*u)",
            "2 * 3 * u / 4 / t",
        ] {
            let e = Expression::coefficient(s, 1).unwrap();
            let printed = e.canonical();
            let again = Expression::coefficient(&printed, 1).unwrap();
            assert_eq!(again.ast, e.ast, "{s} -> {printed}");
            assert_eq!(again.canonical(), printed);
        }
    }

    #[test]
    fn substitution_respects_identifiers() {
        assert_eq!(substitute("lambda*sin(u)+lambda2", "lambda", 0.5), "(0.5)*sin(u)+lambda2");
        let e = Expression::coefficient(&substitute("-lambda*u", "lambda", -2.0), 1).unwrap();
        assert_eq!(e.eval(&Point { t: 0.0, x: &[0.0], u: 3.0, r: 0.0 }), 6.0);
    }
}
