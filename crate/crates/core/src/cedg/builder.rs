//! Pattern-matching graph construction over the token stream of a unit.
//!
//! Statements are recovered with a brace-tracking scanner and each expression
//! is reduced to a forest of *elements*: variables (index expressions and
//! member receivers folded in) and invocations whose children are the
//! elements of their arguments. A statement's first element is the pre-order
//! first element and its last element is the post-order last one, so a call
//! statement `x.f(a)` starts and ends at `f`.

use std::collections::HashMap;

use super::{Cedg, CedgEdge, CedgNode, EdgeType, NodeCategory};
use crate::frontend::lexer::{matching_close, Token, TokenKind};
use crate::frontend::words::{is_elementary_type, is_reserved, system_variable_type};
use crate::frontend::{call_paren, split_header_body, FunctionUnit, UnitKind};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Elem {
    Var(String),
    Call { name: String, member: bool },
}

#[derive(Debug, Clone)]
struct Term {
    elem: Elem,
    children: Vec<Term>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flow {
    Assign,
    SelfAssign,
    Declare,
    Access,
}

#[derive(Debug, Clone)]
struct Simple {
    targets: Vec<Term>,
    rhs: Vec<Term>,
    flow: Flow,
}

#[derive(Debug, Clone)]
enum Stmt {
    Simple(Simple),
    Guard { kind: EdgeType, args: Vec<Term> },
    If { cond: Vec<Term>, then: Vec<Stmt>, els: Option<Vec<Stmt>> },
    While { cond: Vec<Term>, body: Vec<Stmt> },
    For { init: Option<Simple>, cond: Vec<Term>, update: Option<Simple>, body: Vec<Stmt> },
    Try { expr: Vec<Term>, body: Vec<Stmt>, catches: Vec<Vec<Stmt>> },
}

/// Normalizes a declared type to a coarse type name.
fn normalize_type(tokens: &[Token]) -> String {
    let Some(first) = tokens.first() else {
        return "unknown".into();
    };
    if tokens.iter().any(|t| t.is_punct("[")) {
        return "array".into();
    }
    let base = first.text.as_str();
    let ty = if base == "mapping" {
        "mapping"
    } else if base.starts_with("uint") && is_elementary_type(base) {
        "uint"
    } else if base.starts_with("int") && is_elementary_type(base) {
        "int"
    } else if base.starts_with("bytes") || base == "byte" {
        "bytes"
    } else if matches!(base, "address" | "bool" | "string") {
        base
    } else {
        "unknown"
    };
    ty.to_string()
}

/// `Type [location] name` at the end of `tokens`, if it looks like a declaration.
fn declaration(tokens: &[Token]) -> Option<(String, String)> {
    let n = tokens.len();
    if n < 2 {
        return None;
    }
    let name = &tokens[n - 1];
    let before = &tokens[n - 2];
    let first = &tokens[0];
    let type_like_before = before.kind == TokenKind::Ident || before.is_punct("]") || before.is_punct(")");
    if name.kind != TokenKind::Ident || is_reserved(&name.text) || !type_like_before || first.kind != TokenKind::Ident {
        return None;
    }
    if call_paren(tokens, 0).is_some() && first.text != "mapping" {
        return None;
    }
    Some((normalize_type(&tokens[..n - 1]), name.text.clone()))
}

fn split_top_level<'t>(tokens: &'t [Token], sep: &str) -> Vec<&'t [Token]> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if t.kind == TokenKind::Punct {
            match t.text.as_str() {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                s if s == sep && depth == 0 => {
                    parts.push(&tokens[start..i]);
                    start = i + 1;
                }
                _ => {}
            }
        }
    }
    parts.push(&tokens[start..]);
    parts
}

fn close_or_end(tokens: &[Token], open: usize) -> usize {
    matching_close(tokens, open).unwrap_or(tokens.len().saturating_sub(1))
}

struct Parser<'a> {
    toks: &'a [Token],
    locals: &'a mut HashMap<String, String>,
}

impl<'a> Parser<'a> {
    /// Elements of an expression in source order.
    fn terms(&mut self, toks: &[Token]) -> Vec<Term> {
        let mut out = Vec::new();
        let mut brace_depth = 0i32;
        let mut i = 0;
        while i < toks.len() {
            let t = &toks[i];
            match t.kind {
                TokenKind::Punct => {
                    if t.text == "{" {
                        brace_depth += 1;
                    } else if t.text == "}" {
                        brace_depth -= 1;
                    }
                    i += 1;
                }
                TokenKind::Ident if is_reserved(&t.text) => {
                    let casts = is_elementary_type(&t.text) || t.text == "payable";
                    if toks.get(i + 1).is_some_and(|n| n.is_punct("(")) && (casts || t.text == "type") {
                        let close = close_or_end(toks, i + 1);
                        if !casts {
                            i = close + 1;
                            continue;
                        }
                        let inner = self.terms(&toks[i + 2..close]);
                        // `payable(owner).transfer(x)`: the cast result heads a chain.
                        if inner.len() == 1 && toks.get(close + 1).is_some_and(|n| n.is_punct(".")) {
                            let head = inner.into_iter().next().expect("one term");
                            let (path, call) = match head.elem {
                                Elem::Var(p) => (p.split('.').map(str::to_string).collect(), None),
                                Elem::Call { .. } => (Vec::new(), Some(head)),
                            };
                            let (term, next) = self.chain_from(toks, path, call, None, close + 1);
                            out.extend(term);
                            i = next;
                        } else {
                            out.extend(inner);
                            i = close + 1;
                        }
                    } else {
                        i += 1;
                    }
                }
                TokenKind::Ident => {
                    // Named argument keys inside `{k: v}`.
                    if brace_depth > 0 && toks.get(i + 1).is_some_and(|n| n.is_punct(":")) {
                        i += 2;
                        continue;
                    }
                    let (term, next) = self.chain(toks, i);
                    out.extend(term);
                    i = next;
                }
                _ => i += 1,
            }
        }
        out
    }

    /// Parses `a.b[i].f(x).g(y)` starting at identifier `start`.
    fn chain(&mut self, toks: &[Token], start: usize) -> (Option<Term>, usize) {
        self.chain_from(toks, vec![toks[start].text.clone()], None, Some(start), start + 1)
    }

    /// Continues a chain at `j` given the path and call parsed so far.
    /// `last_ident` is the token that may open a call at `j`.
    fn chain_from(
        &mut self,
        toks: &[Token],
        mut path: Vec<String>,
        mut call: Option<Term>,
        mut last_ident: Option<usize>,
        mut j: usize,
    ) -> (Option<Term>, usize) {
        loop {
            let paren = last_ident.filter(|&l| l + 1 == j).and_then(|l| call_paren(toks, l));
            if let Some(paren) = paren {
                let close = close_or_end(toks, paren);
                let mut children: Vec<Term> = call.take().into_iter().collect();
                if paren > j {
                    children.extend(self.terms(&toks[j..paren]));
                }
                children.extend(self.terms(&toks[paren + 1..close]));
                let name = path.pop().unwrap_or_default();
                call = Some(Term { elem: Elem::Call { name, member: !path.is_empty() }, children });
                path.clear();
                j = close + 1;
                continue;
            }
            match toks.get(j) {
                Some(t) if t.is_punct("[") => j = close_or_end(toks, j) + 1,
                Some(t) if t.is_punct(".") => match toks.get(j + 1) {
                    Some(n) if n.kind == TokenKind::Ident => {
                        if call.is_none() {
                            path.push(n.text.clone());
                        } else {
                            path = vec![n.text.clone()];
                        }
                        last_ident = Some(j + 1);
                        j += 2;
                    }
                    _ => break,
                },
                _ => break,
            }
        }
        let term = match call {
            Some(c) => Some(c),
            None if path.is_empty() => None,
            None => Some(Term { elem: Elem::Var(path.join(".")), children: Vec::new() }),
        };
        (term, j)
    }

    fn simple(&mut self, toks: &[Token]) -> Simple {
        const ASSIGN: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "|=", "&=", "^=", "<<=", ">>="];
        let mut depth = 0i32;
        let mut assign_at = None;
        let mut incdec = false;
        for (i, t) in toks.iter().enumerate() {
            if t.kind != TokenKind::Punct {
                continue;
            }
            match t.text.as_str() {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                "++" | "--" if depth == 0 => incdec = true,
                s if depth == 0 && assign_at.is_none() && ASSIGN.contains(&s) => assign_at = Some(i),
                _ => {}
            }
        }
        if let Some(a) = assign_at {
            let lhs = &toks[..a];
            let targets = match declaration(lhs) {
                Some((ty, name)) => {
                    self.locals.insert(name.clone(), ty);
                    vec![Term { elem: Elem::Var(name), children: Vec::new() }]
                }
                None => {
                    self.tuple_declarations(lhs);
                    self.terms(lhs)
                }
            };
            let rhs = self.terms(&toks[a + 1..]);
            return Simple { targets, rhs, flow: Flow::Assign };
        }
        if incdec || toks.first().is_some_and(|t| t.is_ident("delete")) {
            return Simple { targets: self.terms(toks), rhs: Vec::new(), flow: Flow::SelfAssign };
        }
        if let Some((ty, name)) = declaration(toks) {
            self.locals.insert(name.clone(), ty);
            let targets = vec![Term { elem: Elem::Var(name), children: Vec::new() }];
            return Simple { targets, rhs: Vec::new(), flow: Flow::Declare };
        }
        let skip = usize::from(toks.first().is_some_and(|t| t.is_ident("return") || t.is_ident("emit")));
        Simple { targets: Vec::new(), rhs: self.terms(&toks[skip..]), flow: Flow::Access }
    }

    /// Records types from `(uint a, address b)` tuple declarations.
    fn tuple_declarations(&mut self, lhs: &[Token]) {
        if lhs.first().is_some_and(|t| t.is_punct("(")) {
            let close = close_or_end(lhs, 0);
            for part in split_top_level(&lhs[1..close], ",") {
                if let Some((ty, name)) = declaration(part) {
                    self.locals.insert(name, ty);
                }
            }
        }
    }

    /// Parses the statement or block starting at `i`; returns statements and the next index.
    fn body(&mut self, i: usize) -> (Vec<Stmt>, usize) {
        if self.toks.get(i).is_some_and(|t| t.is_punct("{")) {
            let close = close_or_end(self.toks, i);
            (self.block(i + 1, close), close + 1)
        } else {
            self.statement(i)
        }
    }

    fn block(&mut self, mut i: usize, end: usize) -> Vec<Stmt> {
        let mut out = Vec::new();
        while i < end {
            let (stmts, next) = self.statement(i);
            out.extend(stmts);
            i = next.max(i + 1);
        }
        out
    }

    /// Index of the `;` ending the simple statement at `i` (or `end`).
    fn statement_end(&self, i: usize) -> usize {
        let mut depth = 0i32;
        for (j, t) in self.toks.iter().enumerate().skip(i) {
            if t.kind != TokenKind::Punct {
                continue;
            }
            match t.text.as_str() {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" => depth -= 1,
                "}" => {
                    if depth == 0 {
                        return j;
                    }
                    depth -= 1;
                }
                ";" if depth == 0 => return j,
                _ => {}
            }
        }
        self.toks.len()
    }

    fn paren_group(&self, open: usize) -> (usize, usize) {
        let close = close_or_end(self.toks, open);
        (open + 1, close)
    }

    fn statement(&mut self, i: usize) -> (Vec<Stmt>, usize) {
        let toks = self.toks;
        let Some(t) = toks.get(i) else {
            return (Vec::new(), i + 1);
        };
        if t.is_punct(";") {
            return (Vec::new(), i + 1);
        }
        if t.is_punct("{") {
            return self.body(i);
        }
        let next_paren = toks.get(i + 1).is_some_and(|n| n.is_punct("("));
        match t.text.as_str() {
            "unchecked" if toks.get(i + 1).is_some_and(|n| n.is_punct("{")) => return self.body(i + 1),
            "if" if next_paren => {
                let (a, b) = self.paren_group(i + 1);
                let cond = self.terms(&toks[a..b]);
                let (then, mut next) = self.body(b + 1);
                let els = if toks.get(next).is_some_and(|n| n.is_ident("else")) {
                    let (e, n2) = self.body(next + 1);
                    next = n2;
                    Some(e)
                } else {
                    None
                };
                return (vec![Stmt::If { cond, then, els }], next);
            }
            "while" if next_paren => {
                let (a, b) = self.paren_group(i + 1);
                let cond = self.terms(&toks[a..b]);
                let (body, next) = self.body(b + 1);
                return (vec![Stmt::While { cond, body }], next);
            }
            "do" => {
                let (body, next) = self.body(i + 1);
                let mut cond = Vec::new();
                let mut after = next;
                if toks.get(next).is_some_and(|n| n.is_ident("while"))
                    && toks.get(next + 1).is_some_and(|n| n.is_punct("("))
                {
                    let (a, b) = self.paren_group(next + 1);
                    cond = self.terms(&toks[a..b]);
                    after = b + 1;
                }
                return (vec![Stmt::While { cond, body }], after);
            }
            "for" if next_paren => {
                let (a, b) = self.paren_group(i + 1);
                let parts = split_top_level(&toks[a..b], ";");
                let part = |k: usize| parts.get(k).copied().unwrap_or(&[]);
                let init = (!part(0).is_empty()).then(|| self.simple(part(0)));
                let cond = self.terms(part(1));
                let update = (!part(2).is_empty()).then(|| self.simple(part(2)));
                let (body, next) = self.body(b + 1);
                return (vec![Stmt::For { init, cond, update, body }], next);
            }
            "try" => {
                let mut j = i + 1;
                while j < toks.len() && !toks[j].is_punct("{") && !toks[j].is_ident("returns") {
                    if toks[j].is_punct("(") {
                        j = close_or_end(toks, j);
                    }
                    j += 1;
                }
                let expr = self.terms(&toks[i + 1..j.min(toks.len())]);
                if toks.get(j).is_some_and(|n| n.is_ident("returns")) {
                    if let Some(p) = toks.get(j + 1).filter(|n| n.is_punct("(")).map(|_| j + 1) {
                        let (a, b) = self.paren_group(p);
                        for part in split_top_level(&toks[a..b], ",") {
                            if let Some((ty, name)) = declaration(part) {
                                self.locals.insert(name, ty);
                            }
                        }
                        j = b + 1;
                    }
                }
                let (body, mut next) = self.body(j);
                let mut catches = Vec::new();
                while toks.get(next).is_some_and(|n| n.is_ident("catch")) {
                    let mut k = next + 1;
                    while k < toks.len() && !toks[k].is_punct("{") {
                        k += 1;
                    }
                    let (c, n2) = self.body(k);
                    catches.push(c);
                    next = n2;
                }
                return (vec![Stmt::Try { expr, body, catches }], next);
            }
            "require" | "assert" | "revert" => {
                let kind = match t.text.as_str() {
                    "require" => EdgeType::RQ,
                    "assert" => EdgeType::AT,
                    _ => EdgeType::RT,
                };
                let end = self.statement_end(i);
                let args = if next_paren {
                    let (a, b) = self.paren_group(i + 1);
                    self.terms(&toks[a..b.min(end)])
                } else {
                    // `revert CustomError(args);`
                    self.terms(&toks[i + 1..end])
                };
                return (vec![Stmt::Guard { kind, args }], end + 1);
            }
            "break" | "continue" | "_" | "else" => {
                return (Vec::new(), self.statement_end(i) + 1);
            }
            _ => {}
        }
        let end = self.statement_end(i);
        let simple = self.simple(&toks[i..end]);
        (vec![Stmt::Simple(simple)], end + 1)
    }
}

/// Resolved element forest: same shape as `Term`, with node ids.
struct Resolved {
    id: usize,
    is_call: bool,
    children: Vec<Resolved>,
}

struct Emitter<'a> {
    graph: Cedg,
    index: HashMap<(NodeCategory, String), usize>,
    locals: &'a HashMap<String, String>,
    functions: &'a HashMap<String, String>,
}

impl Emitter<'_> {
    fn node(&mut self, category: NodeCategory, sol_type: String, name: String) -> usize {
        if let Some(&id) = self.index.get(&(category, name.clone())) {
            return id;
        }
        let id = self.graph.nodes.len();
        self.graph.nodes.push(CedgNode { id, category, sol_type, name: name.clone() });
        self.index.insert((category, name), id);
        id
    }

    fn edge(&mut self, vs: usize, ve: usize, etype: EdgeType) {
        let order = self.graph.edges.len() + 1;
        self.graph.edges.push(CedgEdge { vs, ve, etype, order });
    }

    fn resolve(&mut self, terms: &[Term]) -> Vec<Resolved> {
        terms.iter().map(|t| self.resolve_one(t)).collect()
    }

    fn resolve_one(&mut self, t: &Term) -> Resolved {
        let (id, is_call) = match &t.elem {
            Elem::Var(path) => {
                let root = path.split('.').next().unwrap_or(path);
                let ty = system_variable_type(path)
                    .map(str::to_string)
                    .or_else(|| self.locals.get(path).cloned())
                    .or_else(|| (root != path).then(|| self.locals.get(root).map(|_| "unknown".to_string())).flatten())
                    .unwrap_or_else(|| "unknown".to_string());
                (self.node(NodeCategory::Variable, ty, path.clone()), false)
            }
            Elem::Call { name, member } => {
                let ty = match self.functions.get(name) {
                    Some(v) if !member => v.clone(),
                    _ if *member => "external".to_string(),
                    _ => "internal".to_string(),
                };
                (self.node(NodeCategory::Invocation, ty, name.clone()), true)
            }
        };
        let children = self.resolve(&t.children);
        Resolved { id, is_call, children }
    }

    /// Access edges: top-level variables access themselves, calls access their
    /// variable arguments.
    fn access(&mut self, terms: &[Resolved], top_level_self: bool) {
        for r in terms {
            if !r.is_call {
                if top_level_self {
                    self.edge(r.id, r.id, EdgeType::AC);
                }
                continue;
            }
            self.call_access(r);
        }
    }

    fn call_access(&mut self, call: &Resolved) {
        for c in &call.children {
            if c.is_call {
                self.call_access(c);
            } else {
                self.edge(call.id, c.id, EdgeType::AC);
            }
        }
    }

    fn connect(&mut self, prev: usize, first: usize, pending: &mut Option<EdgeType>, own: Option<EdgeType>) {
        match (pending.take(), own) {
            (Some(entry), _) => self.edge(prev, first, entry),
            (None, None) => self.edge(prev, first, EdgeType::NS),
            _ => {}
        }
        if let Some(kind) = own {
            self.edge(prev, first, kind);
        }
    }

    fn flow(&mut self, targets: &[Resolved], rhs: &[Resolved], flow: Flow) {
        match flow {
            Flow::Assign => {
                for t in targets {
                    if rhs.is_empty() {
                        self.edge(t.id, t.id, EdgeType::AS);
                    }
                    for r in rhs {
                        self.edge(t.id, r.id, EdgeType::AS);
                    }
                }
                self.access(targets, false);
                self.access(rhs, false);
            }
            Flow::SelfAssign => {
                for t in targets {
                    self.edge(t.id, t.id, EdgeType::AS);
                }
                self.access(targets, false);
            }
            Flow::Declare => {}
            Flow::Access => self.access(rhs, true),
        }
    }

    fn block(&mut self, stmts: &[Stmt], opener: usize, entry: EdgeType) -> usize {
        let mut pending = Some(entry);
        let mut prev = opener;
        for s in stmts {
            prev = self.statement(s, prev, &mut pending);
        }
        if pending.is_none() {
            self.edge(prev, prev, EdgeType::BE);
        }
        prev
    }

    fn header(&mut self, terms: &[Term], prev: usize, pending: &mut Option<EdgeType>, kind: EdgeType) -> (Vec<Resolved>, usize) {
        let rs = self.resolve(terms);
        let first = rs.first().map_or(prev, |r| r.id);
        self.connect(prev, first, pending, Some(kind));
        let last = rs.last().map_or(prev, |r| r.id);
        (rs, last)
    }

    fn statement(&mut self, s: &Stmt, prev: usize, pending: &mut Option<EdgeType>) -> usize {
        match s {
            Stmt::Simple(simple) => {
                let ts = self.resolve(&simple.targets);
                let rs = self.resolve(&simple.rhs);
                let Some(first) = ts.first().or(rs.first()).map(|r| r.id) else {
                    return prev;
                };
                self.connect(prev, first, pending, None);
                self.flow(&ts, &rs, simple.flow);
                rs.last().or(ts.last()).map_or(prev, |r| r.id)
            }
            Stmt::Guard { kind, args } => {
                let (rs, last) = self.header(args, prev, pending, *kind);
                self.access(&rs, true);
                last
            }
            Stmt::If { cond, then, els } => {
                let (rs, cond_last) = self.header(cond, prev, pending, EdgeType::IF);
                self.access(&rs, true);
                let mut last = self.block(then, cond_last, EdgeType::BS);
                if let Some(e) = els {
                    last = self.block(e, cond_last, EdgeType::IE);
                }
                last
            }
            Stmt::While { cond, body } => {
                let (rs, cond_last) = self.header(cond, prev, pending, EdgeType::WH);
                self.access(&rs, true);
                self.block(body, cond_last, EdgeType::BS)
            }
            Stmt::For { init, cond, update, body } => {
                let mut all = Vec::new();
                if let Some(s) = init {
                    all.extend(s.targets.iter().chain(&s.rhs).cloned());
                }
                all.extend(cond.iter().cloned());
                if let Some(s) = update {
                    all.extend(s.targets.iter().chain(&s.rhs).cloned());
                }
                let (_, head_last) = self.header(&all, prev, pending, EdgeType::FR);
                if let Some(s) = init {
                    let (ts, rs) = (self.resolve(&s.targets), self.resolve(&s.rhs));
                    self.flow(&ts, &rs, s.flow);
                }
                let cs = self.resolve(cond);
                self.access(&cs, true);
                if let Some(s) = update {
                    let (ts, rs) = (self.resolve(&s.targets), self.resolve(&s.rhs));
                    self.flow(&ts, &rs, s.flow);
                }
                self.block(body, head_last, EdgeType::BS)
            }
            Stmt::Try { expr, body, catches } => {
                let (rs, expr_last) = self.header(expr, prev, pending, EdgeType::TC);
                self.access(&rs, true);
                let mut last = self.block(body, expr_last, EdgeType::BS);
                for c in catches {
                    last = self.block(c, expr_last, EdgeType::BS);
                }
                last
            }
        }
    }
}

fn visibility(header: &[Token], kind: UnitKind) -> String {
    if let Some(v) = header
        .iter()
        .find(|t| matches!(t.text.as_str(), "public" | "external" | "internal" | "private"))
    {
        return v.text.clone();
    }
    match kind {
        UnitKind::Modifier => "internal".into(),
        UnitKind::Fallback => "external".into(),
        UnitKind::Function => "public".into(),
    }
}

/// Parameter types and modifier mentions from a unit header.
fn parse_header(header: &[Token], locals: &mut HashMap<String, String>) -> Vec<String> {
    let Some(open) = header.iter().position(|t| t.is_punct("(")) else {
        return Vec::new();
    };
    let close = close_or_end(header, open);
    for part in split_top_level(&header[open + 1..close], ",") {
        if let Some((ty, name)) = declaration(part) {
            locals.insert(name, ty);
        }
    }
    let mut mods = Vec::new();
    let mut i = close + 1;
    while i < header.len() {
        let t = &header[i];
        if t.is_ident("returns") || t.is_ident("override") {
            if header.get(i + 1).is_some_and(|n| n.is_punct("(")) {
                i = close_or_end(header, i + 1) + 1;
                continue;
            }
        } else if t.kind == TokenKind::Ident && !is_reserved(&t.text) {
            mods.push(t.text.clone());
            if header.get(i + 1).is_some_and(|n| n.is_punct("(")) {
                i = close_or_end(header, i + 1) + 1;
                continue;
            }
        }
        i += 1;
    }
    mods
}

/// Builds the dependency graph of `unit`. `context` is the set of units of the
/// same contract; it supplies the visibility of self-defined callees and
/// whether the contract has a fallback function.
pub fn build_cedg(unit: &FunctionUnit, context: &[FunctionUnit]) -> Cedg {
    let same_contract: Vec<&FunctionUnit> = context
        .iter()
        .filter(|u| u.path == unit.path && u.contract == unit.contract)
        .collect();
    let mut functions = HashMap::new();
    for u in &same_contract {
        if u.kind != UnitKind::Fallback && !functions.contains_key(&u.name) {
            let (h, _) = split_header_body(&u.source);
            functions.insert(u.name.clone(), visibility(&h, u.kind));
        }
    }
    let has_fallback =
        unit.kind == UnitKind::Fallback || same_contract.iter().any(|u| u.kind == UnitKind::Fallback);

    let (header, body) = split_header_body(&unit.source);
    let own_visibility = visibility(&header, unit.kind);
    functions.insert(unit.name.clone(), own_visibility.clone());

    let mut locals = HashMap::new();
    let modifiers = parse_header(&header, &mut locals);
    let stmts = {
        let mut parser = Parser { toks: &body, locals: &mut locals };
        parser.block(0, body.len())
    };

    let mut em = Emitter { graph: Cedg::default(), index: HashMap::new(), locals: &locals, functions: &functions };
    let def = if unit.kind == UnitKind::Fallback {
        em.node(NodeCategory::Fallback, "fallback".into(), "0".into())
    } else {
        em.node(NodeCategory::Invocation, own_visibility, unit.name.clone())
    };
    let mut opener = def;
    for m in &modifiers {
        let ty = functions.get(m).cloned().unwrap_or_else(|| "internal".into());
        let id = em.node(NodeCategory::Invocation, ty, m.clone());
        em.edge(opener, id, EdgeType::NS);
        opener = id;
    }
    em.block(&stmts, opener, EdgeType::BS);

    if has_fallback {
        let fb = em.node(NodeCategory::Fallback, "fallback".into(), "0".into());
        let targets: Vec<usize> = em
            .graph
            .nodes
            .iter()
            .filter(|n| n.category == NodeCategory::Invocation)
            .map(|n| n.id)
            .collect();
        for t in targets {
            em.edge(fb, t, EdgeType::FB);
        }
    }
    em.graph
}
