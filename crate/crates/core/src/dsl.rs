//! The `.tsl` circuit description language.
//!
//! ```text
//! # a qubit prepared, measured and discarded
//! system q 2
//! pointer x 2
//! gauge forward
//! tensor U = unitary(q -> q) [0.6, 0.8; 0.8, -0.6]
//! tensor K = kraus(q -> q; -> x) { @0 [1, 0; 0, 0]; @1 [0, 0; 0, 1] }
//! circuit main {
//!   node p = ignore_prep(q)
//!   node m = K
//!   node r = ignore_result(q)
//!   node f = flat_result(x)
//!   wire p.out[0] -> m.in[0]
//!   wire m.out[0] -> r.in[0]; wire m.outcome[0] -> f.income[0]
//! }
//! ```
//!
//! `unitary` and `kraus` entries are read in the symmetric gauge and
//! converted to the file gauge; `literal` entries are raw tensor data in the
//! file gauge. A missing `gauge` line means `symmetric`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::circuit::{CircuitGraph, NodeContent};
use crate::error::{Error, Result};
use crate::linalg::{ComplexTensor, C64};
use crate::optensor::{KrausLegs, KrausOp, Leg, LegKind, OperatorTensor, Role};
use crate::types::{GaugeConfig, GaugePreset, PointerType, SystemType, TypeRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

fn syntax(p: Pos, msg: impl Into<String>) -> Error {
    Error::Syntax { line: p.line, col: p.col, msg: msg.into() }
}

fn arity(p: Pos, msg: impl Into<String>) -> Error {
    Error::Arity { line: p.line, col: p.col, msg: msg.into() }
}

// ---- lexer ------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(C64, String),
    Sym(&'static str),
    Newline,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Pos,
}

const SYMBOLS: [&str; 13] = ["->", "(", ")", "[", "]", "{", "}", ",", ";", ".", "=", "@", "?"];

/// `a`, `bi`, `a+bi`, `a-bi` with optional signs and exponents.
pub fn parse_complex(s: &str) -> Option<C64> {
    let bytes = s.as_bytes();
    let split = (1..bytes.len()).find(|&i| {
        (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E')
    });
    let real = |t: &str| -> Option<f64> {
        if t.is_empty() || t.contains('i') {
            return None;
        }
        t.parse::<f64>().ok().filter(|v| v.is_finite())
    };
    let imag = |t: &str| -> Option<f64> {
        let coef = t.strip_suffix('i')?;
        match coef {
            "" | "+" => Some(1.0),
            "-" => Some(-1.0),
            c => real(c),
        }
    };
    match split {
        None if s.ends_with('i') => Some(C64::new(0.0, imag(s)?)),
        None => Some(C64::new(real(s)?, 0.0)),
        Some(k) => Some(C64::new(real(&s[..k])?, imag(&s[k..])?)),
    }
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        let next = chars.get(i + 1).copied();
        if c == '\n' {
            out.push(Token { tok: Tok::Newline, pos });
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let starts_number = c.is_ascii_digit()
            || (c == '.' && next.is_some_and(|n| n.is_ascii_digit()))
            || ((c == '+' || c == '-') && next.is_some_and(|n| n.is_ascii_digit() || n == '.' || n == 'i'));
        if starts_number {
            let start = i;
            while i < chars.len() && matches!(chars[i], '0'..='9' | '.' | 'e' | 'E' | 'i' | '+' | '-') {
                if chars[i] == '-' && chars.get(i + 1) == Some(&'>') {
                    break;
                }
                i += 1;
            }
            let raw: String = chars[start..i].iter().collect();
            let value = parse_complex(&raw).ok_or_else(|| syntax(pos, format!("malformed number `{raw}`")))?;
            out.push(Token { tok: Tok::Num(value, raw), pos });
            col += i - start;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '~') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), pos });
            col += i - start;
            continue;
        }
        let rest: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                out.push(Token { tok: Tok::Sym(s), pos });
                i += s.len();
                col += s.len();
            }
            None => return Err(syntax(pos, format!("unexpected character `{c}`"))),
        }
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, col } });
    Ok(out)
}

// ---- file model -------------------------------------------------------------

/// How a tensor is written in a file.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorExpr {
    IgnorePrep(SystemType),
    IgnoreResult(SystemType),
    FlatPrep(PointerType),
    FlatResult(PointerType),
    /// `None` is the placeholder `readout(x, ?)`.
    Readout(PointerType, Option<usize>),
    NullBox(PointerType),
    MaximalPrep(PointerType, SystemType),
    MaximalResult(PointerType, SystemType),
    Unitary { inputs: Vec<SystemType>, outputs: Vec<SystemType>, matrix: ComplexTensor },
    Kraus { legs: KrausLegs, ops: Vec<KrausOp> },
    Literal { legs: Vec<Leg>, data: ComplexTensor },
    /// A named tensor definition (node position only).
    Ref(String),
}

impl TensorExpr {
    pub fn build(&self, g: &GaugeConfig) -> Result<NodeContent> {
        Ok(match self {
            TensorExpr::IgnorePrep(a) => OperatorTensor::ignore_prep(a, g).into(),
            TensorExpr::IgnoreResult(a) => OperatorTensor::ignore_result(a, g).into(),
            TensorExpr::FlatPrep(x) => OperatorTensor::flat_prep(x, g).into(),
            TensorExpr::FlatResult(x) => OperatorTensor::flat_result(x, g).into(),
            TensorExpr::Readout(x, Some(v)) => OperatorTensor::readout(x, *v, g)?.into(),
            TensorExpr::Readout(x, None) => NodeContent::Placeholder(x.clone()),
            TensorExpr::NullBox(x) => OperatorTensor::null_box(x, g).into(),
            TensorExpr::MaximalPrep(x, a) => OperatorTensor::maximal_prep(x, a, g)?.into(),
            TensorExpr::MaximalResult(x, a) => OperatorTensor::maximal_result(x, a, g)?.into(),
            TensorExpr::Unitary { inputs, outputs, matrix } => {
                OperatorTensor::from_unitary_legs(matrix, inputs, outputs, g)?.into()
            }
            TensorExpr::Kraus { legs, ops } => OperatorTensor::from_kraus(ops, legs, g)?.into(),
            TensorExpr::Literal { legs, data } => OperatorTensor::new(legs.clone(), data.clone(), g.clone())?.into(),
            TensorExpr::Ref(name) => return Err(Error::Unknown(format!("unresolved reference `{name}`"))),
        })
    }

    /// Constructor form when it rebuilds `c` exactly, otherwise a literal.
    pub fn from_content(c: &NodeContent) -> TensorExpr {
        let t = match c {
            NodeContent::Placeholder(x) => return TensorExpr::Readout(x.clone(), None),
            NodeContent::Tensor(t) => t,
        };
        let legs = t.legs();
        let sys = |i: usize| legs.get(i).and_then(|l| l.system()).cloned();
        let ptr = |i: usize| legs.get(i).and_then(|l| l.pointer()).cloned();
        let candidate = match t.role() {
            Role::IgnorePrep => sys(0).map(TensorExpr::IgnorePrep),
            Role::IgnoreResult => sys(0).map(TensorExpr::IgnoreResult),
            Role::FlatPrep => ptr(0).map(TensorExpr::FlatPrep),
            Role::FlatResult => ptr(0).map(TensorExpr::FlatResult),
            Role::Readout(v) => ptr(0).map(|x| TensorExpr::Readout(x, Some(v))),
            Role::NullBox => ptr(0).map(TensorExpr::NullBox),
            Role::MaximalPrep => ptr(0).zip(sys(1)).map(|(x, a)| TensorExpr::MaximalPrep(x, a)),
            Role::MaximalResult => ptr(1).zip(sys(0)).map(|(x, a)| TensorExpr::MaximalResult(x, a)),
            Role::Generic => None,
        };
        if let Some(e) = candidate {
            if let Ok(NodeContent::Tensor(rebuilt)) = e.build(t.gauge()) {
                if rebuilt.legs() == legs && rebuilt.data() == t.data() {
                    return e;
                }
            }
        }
        TensorExpr::Literal { legs: legs.to_vec(), data: t.data().clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorDef {
    pub name: String,
    pub expr: TensorExpr,
    pub content: NodeContent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitDef {
    pub name: String,
    pub graph: CircuitGraph,
    /// Node ids in declaration order with how each was written.
    pub nodes: Vec<(String, TensorExpr)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitFile {
    pub registry: TypeRegistry,
    pub gauge: GaugeConfig,
    pub tensors: Vec<TensorDef>,
    pub circuits: Vec<CircuitDef>,
}

impl CircuitFile {
    pub fn tensor(&self, name: &str) -> Option<&TensorDef> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn circuit(&self, name: &str) -> Option<&CircuitDef> {
        self.circuits.iter().find(|c| c.name == name)
    }

    /// Same file with every tensor and circuit time-reversed.
    pub fn time_reversed(&self) -> CircuitFile {
        let rev = |c: &NodeContent| match c {
            NodeContent::Tensor(t) => NodeContent::from(t.time_reverse()),
            p => p.clone(),
        };
        let tensors = self
            .tensors
            .iter()
            .map(|d| {
                let content = rev(&d.content);
                TensorDef { name: d.name.clone(), expr: TensorExpr::from_content(&content), content }
            })
            .collect();
        let circuits = self
            .circuits
            .iter()
            .map(|c| {
                let graph = c.graph.time_reverse();
                let nodes = c
                    .nodes
                    .iter()
                    .map(|(id, e)| {
                        let e = match e {
                            TensorExpr::Ref(n) => TensorExpr::Ref(n.clone()),
                            _ => TensorExpr::from_content(&graph.nodes()[id]),
                        };
                        (id.clone(), e)
                    })
                    .collect();
                CircuitDef { name: c.name.clone(), graph, nodes }
            })
            .collect();
        CircuitFile { registry: self.registry.clone(), gauge: self.gauge.clone(), tensors, circuits }
    }
}

// ---- parser -----------------------------------------------------------------

struct Parser {
    toks: Vec<Token>,
    i: usize,
    registry: TypeRegistry,
    gauge: Option<GaugeConfig>,
    tensors: Vec<TensorDef>,
    circuits: Vec<CircuitDef>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.i]
    }

    fn pos(&self) -> Pos {
        self.peek().pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if t.tok != Tok::Eof {
            self.i += 1;
        }
        t
    }

    fn skip_newlines(&mut self) {
        while self.peek().tok == Tok::Newline {
            self.i += 1;
        }
    }

    fn at_sym(&self, s: &str) -> bool {
        matches!(self.peek().tok, Tok::Sym(t) if t == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.at_sym(s) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected `{s}`, found {}", describe(&self.peek().tok))))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos)> {
        let t = self.bump();
        match t.tok {
            Tok::Ident(s) => Ok((s, t.pos)),
            other => Err(syntax(t.pos, format!("expected a name, found {}", describe(&other)))),
        }
    }

    fn number(&mut self) -> Result<(C64, Pos)> {
        let t = self.bump();
        match t.tok {
            Tok::Num(v, _) => Ok((v, t.pos)),
            other => Err(syntax(t.pos, format!("expected a number, found {}", describe(&other)))),
        }
    }

    fn integer(&mut self) -> Result<(usize, Pos)> {
        let t = self.bump();
        match &t.tok {
            Tok::Num(_, raw) if raw.bytes().all(|b| b.is_ascii_digit()) => {
                raw.parse().map(|v| (v, t.pos)).map_err(|_| syntax(t.pos, "integer too large"))
            }
            other => Err(syntax(t.pos, format!("expected a non-negative integer, found {}", describe(other)))),
        }
    }

    fn end_statement(&mut self) -> Result<()> {
        match self.peek().tok {
            Tok::Newline | Tok::Eof => Ok(()),
            Tok::Sym(";") => {
                self.i += 1;
                Ok(())
            }
            ref other => Err(syntax(self.pos(), format!("expected end of line, found {}", describe(other)))),
        }
    }

    fn system(&mut self) -> Result<SystemType> {
        let (name, pos) = self.ident()?;
        self.registry.system(&name).cloned().ok_or(Error::UnknownType { line: pos.line, col: pos.col, name })
    }

    fn pointer(&mut self) -> Result<PointerType> {
        let (name, pos) = self.ident()?;
        self.registry.pointer(&name).cloned().ok_or(Error::UnknownType { line: pos.line, col: pos.col, name })
    }

    fn gauge(&self) -> GaugeConfig {
        self.gauge.clone().unwrap_or_else(GaugeConfig::symmetric)
    }

    fn file(&mut self) -> Result<()> {
        loop {
            self.skip_newlines();
            if self.peek().tok == Tok::Eof {
                return Ok(());
            }
            let (kw, pos) = self.ident()?;
            match kw.as_str() {
                "system" | "pointer" => {
                    let (name, npos) = self.ident()?;
                    let (n, _) = self.integer()?;
                    let r = if kw == "system" {
                        self.registry.register_system(&name, n).map(|_| ())
                    } else {
                        self.registry.register_pointer(&name, n).map(|_| ())
                    };
                    r.map_err(|e| syntax(npos, e.to_string()))?;
                }
                "gauge" => self.gauge_statement(pos)?,
                "tensor" => {
                    let (name, npos) = self.ident()?;
                    if self.tensors.iter().any(|t| t.name == name) {
                        return Err(syntax(npos, format!("tensor `{name}` defined twice")));
                    }
                    self.expect_sym("=")?;
                    let epos = self.pos();
                    let expr = self.tensor_expr(false)?;
                    let content = expr.build(&self.gauge()).map_err(|e| locate(epos, e))?;
                    self.tensors.push(TensorDef { name, expr, content });
                }
                "circuit" => self.circuit()?,
                _ => return Err(syntax(pos, format!("unknown statement `{kw}`"))),
            }
            self.end_statement()?;
        }
    }

    fn gauge_statement(&mut self, pos: Pos) -> Result<()> {
        if self.gauge.is_some() {
            return Err(syntax(pos, "gauge declared twice"));
        }
        if !self.tensors.is_empty() || !self.circuits.is_empty() {
            return Err(syntax(pos, "gauge must be declared before tensors and circuits"));
        }
        let (kind, kpos) = self.ident()?;
        let preset = match kind.as_str() {
            "forward" => GaugePreset::Forward,
            "backward" => GaugePreset::Backward,
            "symmetric" => GaugePreset::Symmetric,
            "custom" => GaugePreset::Custom,
            _ => return Err(syntax(kpos, format!("unknown gauge `{kind}`"))),
        };
        if preset != GaugePreset::Custom {
            self.gauge = Some(GaugeConfig::from_preset(preset));
            return Ok(());
        }
        let mut alpha = BTreeMap::new();
        let mut beta = BTreeMap::new();
        self.skip_newlines();
        self.expect_sym("{")?;
        loop {
            self.skip_newlines();
            if self.eat_sym("}") {
                break;
            }
            let (which, wpos) = self.ident()?;
            let (name, value) = match which.as_str() {
                "alpha" => {
                    let a = self.system()?;
                    (a.name().to_string(), self.number()?)
                }
                "beta" => {
                    let x = self.pointer()?;
                    (x.name().to_string(), self.number()?)
                }
                _ => return Err(syntax(wpos, format!("expected `alpha` or `beta`, found `{which}`"))),
            };
            let (v, vpos) = value;
            if v.im != 0.0 || !(v.re > 0.0) {
                return Err(syntax(vpos, "gauge constants must be positive reals"));
            }
            let map = if which == "alpha" { &mut alpha } else { &mut beta };
            map.insert(name, v.re);
            self.eat_sym(";");
        }
        self.gauge = Some(GaugeConfig::custom(alpha, beta).map_err(|e| syntax(kpos, e.to_string()))?);
        Ok(())
    }

    fn type_list<T>(&mut self, mut one: impl FnMut(&mut Self) -> Result<T>, stop: &[&str]) -> Result<Vec<T>> {
        let mut out = Vec::new();
        while !stop.iter().any(|s| self.at_sym(s)) {
            out.push(one(self)?);
            if !self.eat_sym(",") {
                break;
            }
        }
        Ok(out)
    }

    fn tensor_expr(&mut self, allow_ref: bool) -> Result<TensorExpr> {
        let (head, pos) = self.ident()?;
        if !self.at_sym("(") && head != "literal" {
            if allow_ref {
                return Ok(TensorExpr::Ref(head));
            }
            return Err(syntax(pos, format!("expected a tensor constructor, found `{head}`")));
        }
        let expr = match head.as_str() {
            "ignore_prep" | "ignore_result" => {
                self.expect_sym("(")?;
                let a = self.system()?;
                self.close_args(pos)?;
                if head == "ignore_prep" { TensorExpr::IgnorePrep(a) } else { TensorExpr::IgnoreResult(a) }
            }
            "flat_prep" | "flat_result" | "null_box" => {
                self.expect_sym("(")?;
                let x = self.pointer()?;
                self.close_args(pos)?;
                match head.as_str() {
                    "flat_prep" => TensorExpr::FlatPrep(x),
                    "flat_result" => TensorExpr::FlatResult(x),
                    _ => TensorExpr::NullBox(x),
                }
            }
            "readout" => {
                self.expect_sym("(")?;
                let x = self.pointer()?;
                self.comma(pos)?;
                let v = if self.eat_sym("?") {
                    None
                } else {
                    let (v, vpos) = self.integer()?;
                    if v >= x.card() {
                        return Err(syntax(vpos, format!("readout value {v} out of range for card {}", x.card())));
                    }
                    Some(v)
                };
                self.close_args(pos)?;
                TensorExpr::Readout(x, v)
            }
            "maximal_prep" | "maximal_result" => {
                self.expect_sym("(")?;
                let x = self.pointer()?;
                self.comma(pos)?;
                let a = self.system()?;
                self.close_args(pos)?;
                if head == "maximal_prep" { TensorExpr::MaximalPrep(x, a) } else { TensorExpr::MaximalResult(x, a) }
            }
            "unitary" => {
                self.expect_sym("(")?;
                let inputs = self.type_list(Self::system, &["->"])?;
                self.expect_sym("->")?;
                let outputs = self.type_list(Self::system, &[")"])?;
                self.expect_sym(")")?;
                let n_in: usize = inputs.iter().map(|a| a.dim()).product();
                let n_out: usize = outputs.iter().map(|a| a.dim()).product();
                if n_in != n_out {
                    return Err(arity(pos, format!("unitary needs equal dimensions, got {n_in} -> {n_out}")));
                }
                let matrix = self.matrix(n_out, n_in)?;
                TensorExpr::Unitary { inputs, outputs, matrix }
            }
            "kraus" => self.kraus(pos)?,
            "literal" => self.literal()?,
            _ => return Err(syntax(pos, format!("unknown tensor constructor `{head}`"))),
        };
        Ok(expr)
    }

    fn comma(&mut self, head: Pos) -> Result<()> {
        if self.eat_sym(",") {
            Ok(())
        } else {
            Err(arity(head, "too few arguments"))
        }
    }

    fn close_args(&mut self, head: Pos) -> Result<()> {
        if self.eat_sym(")") {
            Ok(())
        } else if self.at_sym(",") {
            Err(arity(head, "too many arguments"))
        } else {
            Err(syntax(self.pos(), format!("expected `)`, found {}", describe(&self.peek().tok))))
        }
    }

    /// `[a, b; c, d]`; rows separated by `;`, entries by `,` or spaces.
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<ComplexTensor> {
        let open = self.pos();
        let grid = self.bracketed()?;
        if grid.len() != rows || grid.iter().any(|r| r.len() != cols) {
            let got: Vec<usize> = grid.iter().map(|r| r.len()).collect();
            return Err(arity(open, format!("expected a {rows}x{cols} matrix, got rows of lengths {got:?}")));
        }
        ComplexTensor::new(vec![rows, cols], grid.concat()).map_err(|e| locate(open, e))
    }

    fn bracketed(&mut self) -> Result<Vec<Vec<C64>>> {
        self.skip_newlines();
        self.expect_sym("[")?;
        let mut rows = vec![Vec::new()];
        loop {
            self.skip_newlines();
            if self.eat_sym("]") {
                break;
            }
            if self.eat_sym(";") {
                rows.push(Vec::new());
                continue;
            }
            if self.eat_sym(",") {
                continue;
            }
            let (v, _) = self.number()?;
            rows.last_mut().expect("row").push(v);
        }
        if rows.len() > 1 && rows.last().is_some_and(|r| r.is_empty()) {
            rows.pop();
        }
        Ok(rows)
    }

    fn kraus(&mut self, head: Pos) -> Result<TensorExpr> {
        self.expect_sym("(")?;
        let inputs = self.type_list(Self::system, &["->"])?;
        self.expect_sym("->")?;
        let outputs = self.type_list(Self::system, &[";", ")"])?;
        let (mut incomes, mut outcomes) = (vec![], vec![]);
        if self.eat_sym(";") {
            incomes = self.type_list(Self::pointer, &["->"])?;
            self.expect_sym("->")?;
            outcomes = self.type_list(Self::pointer, &[")"])?;
        }
        self.expect_sym(")")?;
        let legs = KrausLegs { inputs, outputs, incomes, outcomes };
        let n_in: usize = legs.inputs.iter().map(|a| a.dim()).product();
        let n_out: usize = legs.outputs.iter().map(|a| a.dim()).product();
        let cards: Vec<usize> = legs.incomes.iter().chain(&legs.outcomes).map(|x| x.card()).collect();
        self.skip_newlines();
        self.expect_sym("{")?;
        let mut ops = Vec::new();
        loop {
            self.skip_newlines();
            if self.eat_sym("}") {
                break;
            }
            if self.eat_sym(";") {
                continue;
            }
            let mut pointer = Vec::new();
            let at = self.pos();
            if self.eat_sym("@") {
                loop {
                    let (v, vpos) = self.integer()?;
                    pointer.push((v, vpos));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            if pointer.len() != cards.len() {
                return Err(arity(at, format!("Kraus operator needs {} pointer values, got {}", cards.len(), pointer.len())));
            }
            for (&(v, vpos), &card) in pointer.iter().zip(&cards) {
                if v >= card {
                    return Err(syntax(vpos, format!("pointer value {v} out of range for card {card}")));
                }
            }
            let m = self.matrix(n_out, n_in)?;
            ops.push(KrausOp::with_pointer(pointer.into_iter().map(|p| p.0).collect(), m));
        }
        if ops.is_empty() {
            return Err(arity(head, "kraus needs at least one operator"));
        }
        Ok(TensorExpr::Kraus { legs, ops })
    }

    fn literal(&mut self) -> Result<TensorExpr> {
        let (kw, kpos) = self.ident()?;
        if kw != "legs" {
            return Err(syntax(kpos, format!("expected `legs`, found `{kw}`")));
        }
        self.expect_sym("(")?;
        let mut legs = Vec::new();
        while !self.at_sym(")") {
            let (kind, pos) = self.ident()?;
            let leg = match kind.as_str() {
                "in" => Leg::sys_in(&self.system()?),
                "out" => Leg::sys_out(&self.system()?),
                "income" => Leg::ptr_in(&self.pointer()?),
                "outcome" => Leg::ptr_out(&self.pointer()?),
                _ => return Err(syntax(pos, format!("unknown leg kind `{kind}`"))),
            };
            legs.push(leg);
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym(")")?;
        let open = self.pos();
        let entries: Vec<C64> = self.bracketed()?.concat();
        let shape = crate::optensor::shape_for(&legs);
        let want: usize = shape.iter().product();
        if entries.len() != want {
            return Err(arity(open, format!("literal needs {want} entries, got {}", entries.len())));
        }
        let data = if legs.is_empty() {
            ComplexTensor::scalar(entries[0])
        } else {
            ComplexTensor::new(shape, entries).map_err(|e| locate(open, e))?
        };
        Ok(TensorExpr::Literal { legs, data })
    }

    fn circuit(&mut self) -> Result<()> {
        let (name, npos) = self.ident()?;
        if self.circuits.iter().any(|c| c.name == name) {
            return Err(syntax(npos, format!("circuit `{name}` defined twice")));
        }
        self.skip_newlines();
        self.expect_sym("{")?;
        let g = self.gauge();
        let mut graph = CircuitGraph::new(&g);
        let mut nodes = Vec::new();
        loop {
            self.skip_newlines();
            if self.eat_sym("}") {
                break;
            }
            if self.eat_sym(";") {
                continue;
            }
            let (kw, pos) = self.ident()?;
            match kw.as_str() {
                "node" => {
                    let (id, ipos) = self.ident()?;
                    self.expect_sym("=")?;
                    let epos = self.pos();
                    let expr = self.tensor_expr(true)?;
                    let content = match &expr {
                        TensorExpr::Ref(r) => self
                            .tensors
                            .iter()
                            .find(|t| &t.name == r)
                            .map(|t| t.content.clone())
                            .ok_or_else(|| syntax(epos, format!("unknown tensor `{r}`")))?,
                        e => e.build(&g).map_err(|e| locate(epos, e))?,
                    };
                    graph.add_node(&id, content).map_err(|e| syntax(ipos, e.to_string()))?;
                    nodes.push((id, expr));
                }
                "wire" => {
                    let (a, a_kind, i) = self.port()?;
                    self.expect_sym("->")?;
                    let (b, b_kind, j) = self.port()?;
                    let expected = match a_kind {
                        LegKind::SysOut => LegKind::SysIn,
                        LegKind::PtrOut => LegKind::PtrIn,
                        _ => return Err(syntax(pos, "a wire must start at `out` or `outcome`")),
                    };
                    if b_kind != expected {
                        return Err(syntax(pos, format!("`{}` must be wired to `{}`", a_kind.keyword(), expected.keyword())));
                    }
                    let from = graph.port(&a, a_kind, i).map_err(|e| syntax(pos, e.to_string()))?;
                    let to = graph.port(&b, b_kind, j).map_err(|e| syntax(pos, e.to_string()))?;
                    graph.connect(from, to).map_err(|e| syntax(pos, e.to_string()))?;
                }
                _ => return Err(syntax(pos, format!("expected `node` or `wire`, found `{kw}`"))),
            }
            match self.peek().tok {
                Tok::Newline | Tok::Sym(";") | Tok::Sym("}") => {}
                ref other => return Err(syntax(self.pos(), format!("expected end of statement, found {}", describe(other)))),
            }
        }
        self.circuits.push(CircuitDef { name, graph, nodes });
        Ok(())
    }

    fn port(&mut self) -> Result<(String, LegKind, usize)> {
        let (node, _) = self.ident()?;
        self.expect_sym(".")?;
        let (kind, kpos) = self.ident()?;
        let kind = match kind.as_str() {
            "in" => LegKind::SysIn,
            "out" => LegKind::SysOut,
            "income" => LegKind::PtrIn,
            "outcome" => LegKind::PtrOut,
            _ => return Err(syntax(kpos, format!("unknown leg kind `{kind}`"))),
        };
        self.expect_sym("[")?;
        let (k, _) = self.integer()?;
        self.expect_sym("]")?;
        Ok((node, kind, k))
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Num(_, raw) => format!("`{raw}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Newline => "end of line".into(),
        Tok::Eof => "end of file".into(),
    }
}

/// Attaches a position to a library error raised while building a tensor.
fn locate(p: Pos, e: Error) -> Error {
    match e {
        e @ (Error::Syntax { .. } | Error::UnknownType { .. } | Error::Arity { .. }) => e,
        e => syntax(p, e.to_string()),
    }
}

pub fn parse(text: &str) -> Result<CircuitFile> {
    let mut p = Parser {
        toks: lex(text)?,
        i: 0,
        registry: TypeRegistry::new(),
        gauge: None,
        tensors: Vec::new(),
        circuits: Vec::new(),
    };
    p.file()?;
    let gauge = p.gauge();
    Ok(CircuitFile { registry: p.registry, gauge, tensors: p.tensors, circuits: p.circuits })
}

// ---- serializer -------------------------------------------------------------

/// Shortest round-trip form of each part.
pub fn format_complex(z: C64) -> String {
    match (z.re, z.im) {
        (re, im) if im == 0.0 => format!("{re:?}"),
        (re, im) if re == 0.0 && !re.is_sign_negative() => format!("{im:?}i"),
        (re, im) if im < 0.0 => format!("{re:?}-{:?}i", -im),
        (re, im) => format!("{re:?}+{im:?}i"),
    }
}

fn type_names<T>(ts: &[T], name: impl Fn(&T) -> &str) -> String {
    ts.iter().map(name).collect::<Vec<_>>().join(", ")
}

fn write_matrix(out: &mut String, m: &ComplexTensor, indent: &str) {
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    out.push('[');
    for r in 0..rows {
        if r > 0 {
            let _ = write!(out, ";\n{indent} ");
        }
        let row: Vec<String> = (0..cols).map(|c| format_complex(m.get(&[r, c]))).collect();
        out.push_str(&row.join(", "));
    }
    out.push(']');
}

pub fn write_expr(e: &TensorExpr) -> String {
    let mut s = String::new();
    match e {
        TensorExpr::IgnorePrep(a) => s = format!("ignore_prep({})", a.name()),
        TensorExpr::IgnoreResult(a) => s = format!("ignore_result({})", a.name()),
        TensorExpr::FlatPrep(x) => s = format!("flat_prep({})", x.name()),
        TensorExpr::FlatResult(x) => s = format!("flat_result({})", x.name()),
        TensorExpr::Readout(x, Some(v)) => s = format!("readout({}, {v})", x.name()),
        TensorExpr::Readout(x, None) => s = format!("readout({}, ?)", x.name()),
        TensorExpr::NullBox(x) => s = format!("null_box({})", x.name()),
        TensorExpr::MaximalPrep(x, a) => s = format!("maximal_prep({}, {})", x.name(), a.name()),
        TensorExpr::MaximalResult(x, a) => s = format!("maximal_result({}, {})", x.name(), a.name()),
        TensorExpr::Unitary { inputs, outputs, matrix } => {
            let _ = write!(s, "unitary({} -> {})\n  ", type_names(inputs, |a| a.name()), type_names(outputs, |a| a.name()));
            write_matrix(&mut s, matrix, " ");
        }
        TensorExpr::Kraus { legs, ops } => {
            let _ = write!(s, "kraus({} -> {}", type_names(&legs.inputs, |a| a.name()), type_names(&legs.outputs, |a| a.name()));
            if !legs.incomes.is_empty() || !legs.outcomes.is_empty() {
                let _ = write!(s, "; {} -> {}", type_names(&legs.incomes, |x| x.name()), type_names(&legs.outcomes, |x| x.name()));
            }
            s.push_str(") {\n");
            for op in ops {
                s.push_str("  ");
                if !op.pointer.is_empty() {
                    let vals: Vec<String> = op.pointer.iter().map(|v| v.to_string()).collect();
                    let _ = write!(s, "@{} ", vals.join(","));
                }
                write_matrix(&mut s, &op.matrix, "   ");
                s.push_str(";\n");
            }
            s.push('}');
        }
        TensorExpr::Literal { legs, data } => {
            let names: Vec<String> = legs.iter().map(|l| format!("{} {}", l.kind().keyword(), l.ty().name())).collect();
            let _ = write!(s, "literal legs({}) [", names.join(", "));
            let per_line = legs.last().map_or(1, |l| l.extent().pow(l.n_axes() as u32));
            for (k, z) in data.data().iter().enumerate() {
                if k > 0 {
                    s.push_str(if k % per_line == 0 { ",\n  " } else { ", " });
                }
                s.push_str(&format_complex(*z));
            }
            s.push(']');
        }
        TensorExpr::Ref(name) => s = name.clone(),
    }
    s
}

fn write_gauge(g: &GaugeConfig) -> String {
    if g.kind() != GaugePreset::Custom {
        return format!("gauge {}\n", g.kind());
    }
    let mut s = String::from("gauge custom {\n");
    for (k, v) in g.explicit_alphas() {
        let _ = writeln!(s, "  alpha {k} {v:?}");
    }
    for (k, v) in g.explicit_betas() {
        let _ = writeln!(s, "  beta {k} {v:?}");
    }
    s.push_str("}\n");
    s
}

fn kind_index(legs: &[Leg], leg: usize) -> usize {
    legs[..leg].iter().filter(|l| l.kind() == legs[leg].kind()).count()
}

pub fn serialize(f: &CircuitFile) -> String {
    let mut s = String::new();
    for a in f.registry.systems() {
        let _ = writeln!(s, "system {} {}", a.name(), a.dim());
    }
    for x in f.registry.pointers().filter(|x| x.name() != "0") {
        let _ = writeln!(s, "pointer {} {}", x.name(), x.card());
    }
    s.push_str(&write_gauge(&f.gauge));
    for t in &f.tensors {
        let _ = writeln!(s, "\ntensor {} = {}", t.name, write_expr(&t.expr));
    }
    for c in &f.circuits {
        let _ = writeln!(s, "\ncircuit {} {{", c.name);
        for (id, e) in &c.nodes {
            let _ = writeln!(s, "  node {id} = {}", write_expr(e).replace('\n', "\n  "));
        }
        for w in c.graph.wires() {
            let from_legs = c.graph.nodes()[&w.from.node].legs();
            let to_legs = c.graph.nodes()[&w.to.node].legs();
            let _ = writeln!(
                s,
                "  wire {}.{}[{}] -> {}.{}[{}]",
                w.from.node,
                from_legs[w.from.leg].kind().keyword(),
                kind_index(&from_legs, w.from.leg),
                w.to.node,
                to_legs[w.to.leg].kind().keyword(),
                kind_index(&to_legs, w.to.leg),
            );
        }
        s.push_str("}\n");
    }
    s
}
