use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::KgqError;

pub const DEFAULT_MAX_DEPTH: u32 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KgqQuery {
    pub patterns: Vec<Pattern>,
    pub conditions: Vec<Condition>,
    pub returns: Vec<Projection>,
    pub limit: Option<usize>,
}

/// A node followed by any number of (edge, node) hops.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub start: NodePattern,
    pub hops: Vec<(EdgePattern, NodePattern)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodePattern {
    pub var: String,
    pub type_name: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Out,
    In,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgePattern {
    pub predicate: String,
    pub direction: Direction,
    /// Matches paths of 1..=max_hops edges.
    pub max_hops: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Literal {
    Str(String),
    Num(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Condition {
    Compare {
        var: String,
        path: String,
        op: CmpOp,
        value: Literal,
    },
    Search {
        var: String,
        text: String,
    },
    Id {
        var: String,
        entity: String,
    },
    /// Virtual operator call, removed by expansion.
    Call {
        name: String,
        args: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Projection {
    pub var: String,
    pub path: Option<String>,
}

impl KgqQuery {
    /// Variables bound by MATCH.
    pub fn bound_vars(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for p in &self.patterns {
            out.insert(p.start.var.as_str());
            for (_, n) in &p.hops {
                out.insert(n.var.as_str());
            }
        }
        out
    }

    pub fn has_calls(&self) -> bool {
        self.conditions.iter().any(|c| matches!(c, Condition::Call { .. }))
    }

    /// Every referenced variable must be bound by MATCH; call arguments are
    /// accepted as binders until expansion.
    pub fn check(&self, max_depth: u32) -> Result<(), KgqError> {
        for p in &self.patterns {
            for (e, _) in &p.hops {
                if e.max_hops == 0 || e.max_hops > max_depth {
                    return Err(KgqError::DepthExceeded { hops: e.max_hops, max: max_depth });
                }
            }
        }
        let mut bound = self.bound_vars();
        for c in &self.conditions {
            if let Condition::Call { args, .. } = c {
                bound.extend(args.iter().map(String::as_str));
            }
        }
        let used = self
            .conditions
            .iter()
            .filter_map(|c| match c {
                Condition::Compare { var, .. } | Condition::Search { var, .. } | Condition::Id { var, .. } => Some(var),
                Condition::Call { .. } => None,
            })
            .chain(self.returns.iter().map(|p| &p.var));
        for v in used {
            if !bound.contains(v.as_str()) {
                return Err(KgqError::UnboundVariable(v.clone()));
            }
        }
        Ok(())
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

impl fmt::Display for NodePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.type_name {
            Some(t) => write!(f, "({}:{})", self.var, t),
            None => write!(f, "({})", self.var),
        }
    }
}

impl fmt::Display for EdgePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let star = if self.max_hops == 1 { String::new() } else { format!("*{}", self.max_hops) };
        match self.direction {
            Direction::Out => write!(f, "-[{}{}]->", self.predicate, star),
            Direction::In => write!(f, "<-[{}{}]-", self.predicate, star),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.start)?;
        for (e, n) in &self.hops {
            write!(f, "{e}{n}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Str(s) => f.write_str(&quote(s)),
            Literal::Num(x) => write!(f, "{x}"),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Compare { var, path, op, value } => write!(f, "{var}.{path} {} {value}", op.symbol()),
            Condition::Search { var, text } => write!(f, "SEARCH({var}, {})", quote(text)),
            Condition::Id { var, entity } => write!(f, "ID({var}, {})", quote(entity)),
            Condition::Call { name, args } => write!(f, "{name}({})", args.join(", ")),
        }
    }
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.path {
            Some(p) => write!(f, "{}.{}", self.var, p),
            None => f.write_str(&self.var),
        }
    }
}

fn join<T: fmt::Display>(items: &[T], sep: &str) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(sep)
}

impl fmt::Display for KgqQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MATCH {}", join(&self.patterns, ", "))?;
        if !self.conditions.is_empty() {
            write!(f, " WHERE {}", join(&self.conditions, " AND "))?;
        }
        write!(f, " RETURN {}", join(&self.returns, ", "))?;
        if let Some(l) = self.limit {
            write!(f, " LIMIT {l}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    Int(u64),
    Sym(&'static str),
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
}

const SYMBOLS: &[&str] = &["!=", "<=", ">=", ":=", "(", ")", "[", "]", ":", ",", ".", "*", "-", ">", "<", "="];

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, KgqError> {
    let mut lx = Lexer { src, toks: Vec::new() };
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b'"' {
            let start = i;
            i += 1;
            while i < bytes.len() && bytes[i] != b'"' {
                i += if bytes[i] == b'\\' { 2 } else { 1 };
            }
            if i >= bytes.len() {
                return Err(syntax(start, "unterminated string"));
            }
            i += 1;
            let s: String =
                serde_json::from_str(&src[start..i]).map_err(|e| syntax(start, &format!("bad string literal: {e}")))?;
            lx.toks.push((Tok::Str(s), start));
        } else if c.is_ascii_digit() || (c == b'-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            i += 1;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || matches!(bytes[i], b'.' | b'+' | b'-')) {
                if matches!(bytes[i], b'+' | b'-') && !matches!(bytes[i - 1], b'e' | b'E') {
                    break;
                }
                i += 1;
            }
            let text = &src[start..i];
            let tok = match text.parse::<u64>() {
                Ok(n) => Tok::Int(n),
                Err(_) => Tok::Num(
                    text.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| syntax(start, &format!("bad number {text}")))?,
                ),
            };
            lx.toks.push((tok, start));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            lx.toks.push((Tok::Ident(src[start..i].to_string()), start));
        } else if let Some(s) = SYMBOLS.iter().find(|s| lx.src[i..].starts_with(**s)) {
            lx.toks.push((Tok::Sym(s), i));
            i += s.len();
        } else {
            return Err(syntax(i, &format!("unexpected character {:?}", src[i..].chars().next().unwrap())));
        }
    }
    Ok(lx.toks)
}

fn syntax(pos: usize, msg: &str) -> KgqError {
    KgqError::Syntax { pos, message: msg.to_string() }
}

const KEYWORDS: &[&str] = &["MATCH", "WHERE", "AND", "RETURN", "LIMIT"];

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self, KgqError> {
        Ok(Self { toks: lex(src)?, at: 0, end: src.len() })
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |t| t.1)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.0)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.at + k).map(|t| &t.0)
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x.eq_ignore_ascii_case(kw))
    }

    fn sym(&mut self, s: &str) -> Result<(), KgqError> {
        if self.is_sym(s) {
            self.at += 1;
            Ok(())
        } else {
            Err(syntax(self.pos(), &format!("expected {s:?}")))
        }
    }

    fn kw(&mut self, kw: &str) -> Result<(), KgqError> {
        if self.is_kw(kw) {
            self.at += 1;
            Ok(())
        } else {
            Err(syntax(self.pos(), &format!("expected {kw}")))
        }
    }

    fn ident(&mut self) -> Result<String, KgqError> {
        match self.peek() {
            Some(Tok::Ident(s)) if !KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(s)) => {
                let s = s.clone();
                self.at += 1;
                Ok(s)
            }
            _ => Err(syntax(self.pos(), "expected an identifier")),
        }
    }

    fn string(&mut self) -> Result<String, KgqError> {
        match self.peek() {
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.at += 1;
                Ok(s)
            }
            _ => Err(syntax(self.pos(), "expected a string")),
        }
    }

    fn int(&mut self) -> Result<u64, KgqError> {
        match self.peek() {
            Some(Tok::Int(n)) => {
                let n = *n;
                self.at += 1;
                Ok(n)
            }
            _ => Err(syntax(self.pos(), "expected an integer")),
        }
    }

    /// pred ("." pred)?
    fn predpath(&mut self) -> Result<String, KgqError> {
        let mut p = self.ident()?;
        if self.is_sym(".") {
            self.at += 1;
            p.push('.');
            p.push_str(&self.ident()?);
        }
        Ok(p)
    }

    fn node(&mut self) -> Result<NodePattern, KgqError> {
        self.sym("(")?;
        let var = self.ident()?;
        let type_name = if self.is_sym(":") {
            self.at += 1;
            Some(self.ident()?)
        } else {
            None
        };
        self.sym(")")?;
        Ok(NodePattern { var, type_name })
    }

    fn hops(&mut self) -> Result<u32, KgqError> {
        if !self.is_sym("*") {
            return Ok(1);
        }
        self.at += 1;
        let p = self.pos();
        let n = self.int()?;
        u32::try_from(n).map_err(|_| syntax(p, "repetition too large"))
    }

    fn edge(&mut self) -> Result<Option<EdgePattern>, KgqError> {
        if self.is_sym("-") {
            self.at += 1;
            self.sym("[")?;
            let predicate = self.predpath()?;
            let max_hops = self.hops()?;
            self.sym("]")?;
            self.sym("-")?;
            self.sym(">")?;
            Ok(Some(EdgePattern { predicate, direction: Direction::Out, max_hops }))
        } else if self.is_sym("<") {
            self.at += 1;
            self.sym("-")?;
            self.sym("[")?;
            let predicate = self.predpath()?;
            let max_hops = self.hops()?;
            self.sym("]")?;
            self.sym("-")?;
            Ok(Some(EdgePattern { predicate, direction: Direction::In, max_hops }))
        } else {
            Ok(None)
        }
    }

    fn pattern(&mut self) -> Result<Pattern, KgqError> {
        let start = self.node()?;
        let mut hops = Vec::new();
        while let Some(e) = self.edge()? {
            hops.push((e, self.node()?));
        }
        Ok(Pattern { start, hops })
    }

    fn patterns(&mut self) -> Result<Vec<Pattern>, KgqError> {
        let mut out = vec![self.pattern()?];
        while self.is_sym(",") {
            self.at += 1;
            out.push(self.pattern()?);
        }
        Ok(out)
    }

    fn condition(&mut self) -> Result<Condition, KgqError> {
        for (kw, is_search) in [("SEARCH", true), ("ID", false)] {
            if self.is_kw(kw) && matches!(self.peek_at(1), Some(Tok::Sym("("))) {
                self.at += 2;
                let var = self.ident()?;
                self.sym(",")?;
                let s = self.string()?;
                self.sym(")")?;
                return Ok(if is_search {
                    Condition::Search { var, text: s }
                } else {
                    Condition::Id { var, entity: s }
                });
            }
        }
        let name = self.ident()?;
        if self.is_sym("(") {
            self.at += 1;
            let mut args = vec![self.ident()?];
            while self.is_sym(",") {
                self.at += 1;
                args.push(self.ident()?);
            }
            self.sym(")")?;
            return Ok(Condition::Call { name, args });
        }
        self.sym(".")?;
        let path = self.predpath()?;
        let p = self.pos();
        let op = match self.peek() {
            Some(Tok::Sym("=")) => CmpOp::Eq,
            Some(Tok::Sym("!=")) => CmpOp::Ne,
            Some(Tok::Sym("<")) => CmpOp::Lt,
            Some(Tok::Sym("<=")) => CmpOp::Le,
            Some(Tok::Sym(">")) => CmpOp::Gt,
            Some(Tok::Sym(">=")) => CmpOp::Ge,
            _ => return Err(syntax(p, "expected a comparison operator")),
        };
        self.at += 1;
        let value = match self.peek() {
            Some(Tok::Str(s)) => Literal::Str(s.clone()),
            Some(Tok::Num(x)) => Literal::Num(*x),
            Some(Tok::Int(n)) => Literal::Num(*n as f64),
            _ => return Err(syntax(self.pos(), "expected a literal")),
        };
        self.at += 1;
        Ok(Condition::Compare { var: name, path, op, value })
    }

    fn conditions(&mut self) -> Result<Vec<Condition>, KgqError> {
        let mut out = vec![self.condition()?];
        while self.is_kw("AND") {
            self.at += 1;
            out.push(self.condition()?);
        }
        Ok(out)
    }

    fn projection(&mut self) -> Result<Projection, KgqError> {
        let var = self.ident()?;
        let path = if self.is_sym(".") {
            self.at += 1;
            Some(self.predpath()?)
        } else {
            None
        };
        Ok(Projection { var, path })
    }

    fn query(&mut self) -> Result<KgqQuery, KgqError> {
        self.kw("MATCH")?;
        let patterns = self.patterns()?;
        let conditions = if self.is_kw("WHERE") {
            self.at += 1;
            self.conditions()?
        } else {
            Vec::new()
        };
        self.kw("RETURN")?;
        let mut returns = vec![self.projection()?];
        while self.is_sym(",") {
            self.at += 1;
            returns.push(self.projection()?);
        }
        let limit = if self.is_kw("LIMIT") {
            self.at += 1;
            let p = self.pos();
            Some(usize::try_from(self.int()?).map_err(|_| syntax(p, "limit too large"))?)
        } else {
            None
        };
        self.finish()?;
        Ok(KgqQuery { patterns, conditions, returns, limit })
    }

    fn finish(&self) -> Result<(), KgqError> {
        if self.at < self.toks.len() {
            return Err(syntax(self.pos(), "unexpected trailing input"));
        }
        Ok(())
    }
}

pub fn parse_kgq(text: &str) -> Result<KgqQuery, KgqError> {
    parse_kgq_with(text, DEFAULT_MAX_DEPTH)
}

/// Parses and checks variable binding and the repetition bound.
pub fn parse_kgq_with(text: &str, max_depth: u32) -> Result<KgqQuery, KgqError> {
    let q = Parser::new(text)?.query()?;
    q.check(max_depth)?;
    Ok(q)
}

/// A named, parameterized query fragment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualOperator {
    pub name: String,
    pub params: Vec<String>,
    pub patterns: Vec<Pattern>,
    pub conditions: Vec<Condition>,
}

impl VirtualOperator {
    /// Parses `Name(p1, p2) := pattern, ... [WHERE cond AND ...]`.
    pub fn parse(def: &str) -> Result<Self, KgqError> {
        let mut p = Parser::new(def)?;
        let name = p.ident()?;
        p.sym("(")?;
        let mut params = vec![p.ident()?];
        while p.is_sym(",") {
            p.at += 1;
            params.push(p.ident()?);
        }
        p.sym(")")?;
        p.sym(":=")?;
        let patterns = p.patterns()?;
        let conditions = if p.is_kw("WHERE") {
            p.at += 1;
            p.conditions()?
        } else {
            Vec::new()
        };
        p.finish()?;
        Ok(Self { name, params, patterns, conditions })
    }
}

impl fmt::Display for VirtualOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}) := {}", self.name, self.params.join(", "), join(&self.patterns, ", "))?;
        if !self.conditions.is_empty() {
            write!(f, " WHERE {}", join(&self.conditions, " AND "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OperatorRegistry {
    ops: BTreeMap<String, VirtualOperator>,
}

impl OperatorRegistry {
    pub fn register(&mut self, op: VirtualOperator) {
        self.ops.insert(op.name.clone(), op);
    }

    pub fn define(&mut self, def: &str) -> Result<(), KgqError> {
        self.register(VirtualOperator::parse(def)?);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&VirtualOperator> {
        self.ops.get(name)
    }

    pub fn operators(&self) -> impl Iterator<Item = &VirtualOperator> {
        self.ops.values()
    }
}

struct Expander<'a> {
    registry: &'a OperatorRegistry,
    taken: BTreeSet<String>,
    counter: usize,
    stack: Vec<String>,
    patterns: Vec<Pattern>,
    conditions: Vec<Condition>,
}

impl Expander<'_> {
    fn fresh(&mut self, var: &str) -> String {
        loop {
            self.counter += 1;
            let v = format!("_v{}_{}", self.counter, var);
            if self.taken.insert(v.clone()) {
                return v;
            }
        }
    }

    fn condition(&mut self, c: Condition) -> Result<(), KgqError> {
        let Condition::Call { name, args } = c else {
            self.conditions.push(c);
            return Ok(());
        };
        let op = self.registry.get(&name).ok_or_else(|| KgqError::UnknownOperator(name.clone()))?;
        if self.stack.contains(&name) {
            let mut cycle = self.stack.clone();
            cycle.push(name);
            return Err(KgqError::RecursiveExpansion(cycle));
        }
        if op.params.len() != args.len() {
            return Err(KgqError::Arity { operator: name, expected: op.params.len(), found: args.len() });
        }
        let mut rename: BTreeMap<String, String> = op.params.iter().cloned().zip(args).collect();
        let mut var = |v: &str, ex: &mut Self| -> String {
            if let Some(r) = rename.get(v) {
                return r.clone();
            }
            let r = ex.fresh(v);
            rename.insert(v.to_string(), r.clone());
            r
        };
        let node = |n: &NodePattern, ex: &mut Self, var: &mut dyn FnMut(&str, &mut Self) -> String| NodePattern {
            var: var(&n.var, ex),
            type_name: n.type_name.clone(),
        };
        let op = op.clone();
        for p in &op.patterns {
            let start = node(&p.start, self, &mut var);
            let hops = p.hops.iter().map(|(e, n)| (e.clone(), node(n, self, &mut var))).collect();
            self.patterns.push(Pattern { start, hops });
        }
        self.stack.push(op.name.clone());
        for c in &op.conditions {
            let renamed = match c {
                Condition::Compare { var: v, path, op, value } => {
                    Condition::Compare { var: var(v, self), path: path.clone(), op: *op, value: value.clone() }
                }
                Condition::Search { var: v, text } => Condition::Search { var: var(v, self), text: text.clone() },
                Condition::Id { var: v, entity } => Condition::Id { var: var(v, self), entity: entity.clone() },
                Condition::Call { name, args } => {
                    Condition::Call { name: name.clone(), args: args.iter().map(|a| var(a, self)).collect() }
                }
            };
            self.condition(renamed)?;
        }
        self.stack.pop();
        Ok(())
    }
}

/// Replaces every operator call by its fragment: parameters become the call
/// arguments, other fragment variables get fresh `_v<n>_<name>` names.
pub fn expand_virtual_ops(query: &KgqQuery, registry: &OperatorRegistry) -> Result<KgqQuery, KgqError> {
    if !query.has_calls() {
        return Ok(query.clone());
    }
    let mut taken: BTreeSet<String> = query.bound_vars().into_iter().map(str::to_string).collect();
    for c in &query.conditions {
        if let Condition::Call { args, .. } = c {
            taken.extend(args.iter().cloned());
        }
    }
    let mut ex = Expander {
        registry,
        taken,
        counter: 0,
        stack: Vec::new(),
        patterns: query.patterns.clone(),
        conditions: Vec::new(),
    };
    for c in &query.conditions {
        ex.condition(c.clone())?;
    }
    let out = KgqQuery {
        patterns: ex.patterns,
        conditions: ex.conditions,
        returns: query.returns.clone(),
        limit: query.limit,
    };
    out.check(u32::MAX)?;
    Ok(out)
}
