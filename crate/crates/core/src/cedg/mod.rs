//! Contract Elements Dependency Graph.
//!
//! Nodes are program elements of one function (invocations, variables and the
//! contract's fallback function); edges are typed, ordered control-flow,
//! data-flow and fallback relations between them. Edge `order` records the
//! sequence in which relations occur while executing the function body.

mod builder;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

pub use builder::build_cedg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeCategory {
    Invocation,
    Variable,
    Fallback,
}

impl NodeCategory {
    pub const ALL: [NodeCategory; 3] = [NodeCategory::Invocation, NodeCategory::Variable, NodeCategory::Fallback];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CedgNode {
    pub id: usize,
    pub category: NodeCategory,
    /// Visibility for invocations, declared type for variables, `fallback`
    /// for the fallback node.
    #[serde(rename = "type")]
    pub sol_type: String,
    /// `"0"` for the fallback node.
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeType {
    IF,
    IE,
    WH,
    FR,
    TC,
    AT,
    RT,
    RQ,
    BS,
    BE,
    NS,
    AS,
    AC,
    FB,
}

impl EdgeType {
    pub const ALL: [EdgeType; 14] = [
        EdgeType::IF,
        EdgeType::IE,
        EdgeType::WH,
        EdgeType::FR,
        EdgeType::TC,
        EdgeType::AT,
        EdgeType::RT,
        EdgeType::RQ,
        EdgeType::BS,
        EdgeType::BE,
        EdgeType::NS,
        EdgeType::AS,
        EdgeType::AC,
        EdgeType::FB,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CedgEdge {
    pub vs: usize,
    pub ve: usize,
    #[serde(rename = "type")]
    pub etype: EdgeType,
    pub order: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cedg {
    pub nodes: Vec<CedgNode>,
    pub edges: Vec<CedgEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// `node <id>`, `edge #<index>` or `graph`.
    pub subject: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.rule)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CedgError {
    #[error("malformed graph at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid graph: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

impl Cedg {
    pub fn fallback_node(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.category == NodeCategory::Fallback)
    }

    pub fn max_order(&self) -> usize {
        self.edges.iter().map(|e| e.order).max().unwrap_or(0)
    }
}

/// Checks every structural invariant; an empty result means the graph is valid.
pub fn validate(g: &Cedg) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |subject: String, rule: String| out.push(Violation { subject, rule });

    let mut fallbacks = 0;
    for (i, n) in g.nodes.iter().enumerate() {
        if n.id != i {
            push(format!("node {}", n.id), format!("id is not dense (expected {i})"));
        }
        if n.category == NodeCategory::Fallback {
            fallbacks += 1;
            if n.name != "0" || n.sol_type != "fallback" {
                push(format!("node {}", n.id), "fallback node must have type `fallback` and name `0`".into());
            }
        }
    }
    if fallbacks > 1 {
        push("graph".into(), format!("{fallbacks} fallback nodes, at most one allowed"));
    }

    let n = g.nodes.len();
    let mut order_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for (k, e) in g.edges.iter().enumerate() {
        for (end, id) in [("vs", e.vs), ("ve", e.ve)] {
            if id >= n {
                push(format!("edge #{k}"), format!("{end}={id} references a missing node"));
            }
        }
        if e.etype == EdgeType::FB && g.nodes.get(e.vs).is_some_and(|s| s.category != NodeCategory::Fallback) {
            push(format!("edge #{k}"), "FB edge must start at the fallback node".into());
        }
        if e.order == 0 || e.order > g.edges.len() {
            push(format!("edge #{k}"), format!("order {} outside 1..={}", e.order, g.edges.len()));
        }
        *order_counts.entry(e.order).or_default() += 1;
    }
    for (order, count) in &order_counts {
        if *count > 1 && (1..=g.edges.len()).contains(order) {
            push("graph".into(), format!("order {order} used by {count} edges"));
        }
    }
    for order in 1..=g.edges.len() {
        if !order_counts.contains_key(&order) {
            push("graph".into(), format!("order {order} is missing"));
        }
    }
    out
}

/// Compact JSON form: `{"nodes":[...],"edges":[...]}`.
pub fn serialize(g: &Cedg) -> Result<String, CedgError> {
    let violations = validate(g);
    if !violations.is_empty() {
        return Err(CedgError::Invalid(violations));
    }
    Ok(serde_json::to_string(g).expect("graph serializes"))
}

pub fn deserialize(text: &str) -> Result<Cedg, CedgError> {
    serde_json::from_str(text).map_err(|e| CedgError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Graphviz rendering for inspection.
pub fn to_dot(g: &Cedg) -> String {
    let mut s = String::from("digraph cedg {\n");
    for n in &g.nodes {
        let shape = match n.category {
            NodeCategory::Invocation => "box",
            NodeCategory::Variable => "ellipse",
            NodeCategory::Fallback => "diamond",
        };
        let _ = writeln!(
            s,
            "  n{} [shape={shape}, label=\"{:?}\\n{}\\n{}\"];",
            n.id,
            n.category,
            n.sol_type,
            n.name.replace('"', "\\\"")
        );
    }
    for e in &g.edges {
        let _ = writeln!(s, "  n{} -> n{} [label=\"{}:{}\"];", e.vs, e.ve, e.etype, e.order);
    }
    s.push_str("}\n");
    s
}
