//! Edge-aware graph attention over a dependency graph, producing one
//! `dim`-wide vector per graph.
//!
//! Every directed edge forms a triple (source node, end node, edge). Per head
//! the triple vector is `W1 [h_s ‖ h_e ‖ e]`, its score is
//! `LeakyReLU(W2 · c)`, and scores are normalized with a softmax over the
//! triples that share a source node. A node's new vector is ELU of the
//! head-averaged, attention-weighted sum of its triple vectors; nodes without
//! outgoing triples keep their input vector. The readout concatenates a fixed
//! number of node slots in id order and projects to `dim`.

use crate::cedg::{Cedg, CedgEdge, NodeCategory};
use crate::frontend::words::split_identifier;
use crate::frontend::Vocabulary;
use crate::nnkernel::{
    declare_dense, dense, positional_rows, Init, KernelError, ModelConfig, ParameterStore, Tape, Tensor, Var,
};

/// Slope of the LeakyReLU applied to triple scores.
pub const SCORE_SLOPE: f64 = 0.2;

/// Node type strings with a learned embedding; anything else maps to row 0.
pub const TYPE_NAMES: [&str; 15] = [
    "<unk>", "public", "external", "internal", "private", "fallback", "uint", "int", "address", "bool", "string",
    "bytes", "mapping", "array", "unknown",
];

pub fn type_index(sol_type: &str) -> usize {
    TYPE_NAMES.iter().position(|t| *t == sol_type).unwrap_or(0)
}

fn hop_head(hop: usize, head: usize) -> (String, String) {
    (format!("graph.hop{hop}.head{head}.w1"), format!("graph.hop{hop}.head{head}.w2"))
}

/// Declares every graph-encoder parameter for a vocabulary of `vocab_len` words.
pub fn declare_graph_params(store: &mut ParameterStore, cfg: &ModelConfig, vocab_len: usize) {
    let d = cfg.dim;
    store.declare("graph.cat_emb", NodeCategory::ALL.len(), d, Init::Uniform { fan_in: 1 });
    store.declare("graph.type_emb", TYPE_NAMES.len(), d, Init::Uniform { fan_in: 1 });
    // The extra last row is the dedicated name embedding of the fallback node.
    store.declare("graph.name_emb", vocab_len + 1, d, Init::Uniform { fan_in: 1 });
    store.declare("graph.edge_type_emb", 14, d, Init::Uniform { fan_in: 1 });
    declare_dense(store, "graph.node_proj", 3 * d, d);
    for hop in 0..cfg.hops {
        for head in 0..cfg.graph_heads {
            let (w1, w2) = hop_head(hop, head);
            store.declare(&w1, 3 * d, d, Init::Uniform { fan_in: 3 * d });
            store.declare(&w2, d, 1, Init::Uniform { fan_in: d });
        }
    }
    declare_dense(store, "graph.readout", cfg.max_nodes * d, d);
}

/// Vocabulary ids of a node's name words; the fallback node uses its own row.
pub fn node_name_ids(category: NodeCategory, name: &str, vocab: &Vocabulary) -> Vec<usize> {
    if category == NodeCategory::Fallback {
        return vec![vocab.len()];
    }
    split_identifier(name).iter().map(|w| vocab.id(w)).collect()
}

/// Intermediate values of one graph encoding, for inspection and tests.
#[derive(Debug, Clone)]
pub struct GraphEncoding {
    /// Initial node vectors, one row per node.
    pub nodes: Var,
    /// Edge vectors in processing order.
    pub edges: Var,
    /// Edges in processing order (sorted by order attribute).
    pub edge_list: Vec<CedgEdge>,
    /// Per hop, per head: attention weight column (one row per processed edge).
    pub attention: Vec<Vec<Var>>,
    /// Node vectors after the last hop.
    pub updated: Var,
    /// The `1 × dim` graph vector.
    pub vector: Var,
}

/// Initial node vectors: `[category ‖ type ‖ mean name words]` projected to `dim`.
pub fn init_node_vectors(tape: &mut Tape, g: &Cedg, vocab: &Vocabulary) -> Result<Var, KernelError> {
    let p = tape.params(&["graph.cat_emb", "graph.type_emb", "graph.name_emb"])?;
    let cats: Vec<Option<usize>> = g.nodes.iter().map(|n| Some(n.category.index())).collect();
    let types: Vec<Option<usize>> = g.nodes.iter().map(|n| Some(type_index(&n.sol_type))).collect();
    let names: Vec<Vec<usize>> = g.nodes.iter().map(|n| node_name_ids(n.category, &n.name, vocab)).collect();
    let c = tape.gather_rows(p[0], &cats);
    let t = tape.gather_rows(p[1], &types);
    let w = tape.gather_mean(p[2], &names);
    let joined = tape.concat_cols(&[c, t, w]);
    dense(tape, joined, "graph.node_proj")
}

/// Edge vectors: type embedding plus the sinusoidal encoding of the order.
pub fn init_edge_vectors(tape: &mut Tape, edges: &[CedgEdge], dim: usize) -> Result<Var, KernelError> {
    let table = tape.param("graph.edge_type_emb")?;
    let ids: Vec<Option<usize>> = edges.iter().map(|e| Some(e.etype.index())).collect();
    let types = tape.gather_rows(table, &ids);
    let pe = tape.constant(positional_rows(edges.iter().map(|e| e.order), dim)?);
    Ok(tape.add(types, pe))
}

/// One round of triple attention. Returns the new node vectors and the
/// per-head attention columns.
pub fn triple_forward(
    tape: &mut Tape,
    nodes: Var,
    edge_vectors: Var,
    edges: &[CedgEdge],
    hop: usize,
    heads: usize,
) -> Result<(Var, Vec<Var>), KernelError> {
    let n = tape.value(nodes).rows();
    if edges.is_empty() {
        return Ok((nodes, Vec::new()));
    }
    let sources: Vec<usize> = edges.iter().map(|e| e.vs).collect();
    let src = tape.gather_rows(nodes, &sources.iter().map(|&i| Some(i)).collect::<Vec<_>>());
    let dst = tape.gather_rows(nodes, &edges.iter().map(|e| Some(e.ve)).collect::<Vec<_>>());
    let triples = tape.concat_cols(&[src, dst, edge_vectors]);

    let mut total = None;
    let mut attention = Vec::with_capacity(heads);
    for head in 0..heads {
        let (w1, w2) = hop_head(hop, head);
        let w = tape.params(&[w1, w2])?;
        let c = tape.matmul(triples, w[0]);
        let score = tape.matmul(c, w[1]);
        let score = tape.leaky_relu(score, SCORE_SLOPE);
        let alpha = tape.segment_softmax(score, &sources);
        attention.push(alpha);
        let weighted = tape.scale_rows(c, alpha);
        let agg = tape.scatter_add_rows(weighted, &sources, n);
        total = Some(match total {
            None => agg,
            Some(t) => tape.add(t, agg),
        });
    }
    let mean = tape.scale(total.expect("at least one head"), 1.0 / heads as f64);
    let activated = tape.elu(mean);

    let mut has_triple = vec![0.0; n];
    for &s in &sources {
        has_triple[s] = 1.0;
    }
    let keep: Vec<f64> = has_triple.iter().map(|h| 1.0 - h).collect();
    let has = tape.constant(Tensor::matrix(n, 1, has_triple));
    let keep = tape.constant(Tensor::matrix(n, 1, keep));
    let updated = tape.scale_rows(activated, has);
    let kept = tape.scale_rows(nodes, keep);
    Ok((tape.add(updated, kept), attention))
}

/// Pads or truncates node rows to `max_nodes` slots, concatenates them and projects to `dim`.
pub fn graph_readout(tape: &mut Tape, nodes: Var, max_nodes: usize) -> Result<Var, KernelError> {
    let (n, d) = tape.value(nodes).dims();
    if n > max_nodes {
        log::warn!("graph has {n} nodes; readout keeps the first {max_nodes}");
    }
    let slots: Vec<Option<usize>> = (0..max_nodes).map(|i| (i < n).then_some(i)).collect();
    let padded = tape.gather_rows(nodes, &slots);
    let flat = tape.reshape(padded, 1, max_nodes * d);
    dense(tape, flat, "graph.readout")
}

/// Full graph encoding with intermediate values.
pub fn encode_graph_detailed(
    tape: &mut Tape,
    g: &Cedg,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
) -> Result<GraphEncoding, KernelError> {
    let mut edge_list = g.edges.clone();
    // The order attribute, not list position, carries sequence information.
    edge_list.sort_by_key(|e| (e.order, e.vs, e.ve, e.etype));
    let nodes = if g.nodes.is_empty() {
        tape.constant(Tensor::zeros(0, cfg.dim))
    } else {
        init_node_vectors(tape, g, vocab)?
    };
    let edges = init_edge_vectors(tape, &edge_list, cfg.dim)?;
    let mut h = nodes;
    let mut attention = Vec::with_capacity(cfg.hops);
    for hop in 0..cfg.hops {
        let (next, alpha) = triple_forward(tape, h, edges, &edge_list, hop, cfg.graph_heads)?;
        h = next;
        attention.push(alpha);
    }
    let vector = graph_readout(tape, h, cfg.max_nodes)?;
    Ok(GraphEncoding { nodes, edges, edge_list, attention, updated: h, vector })
}

/// The `1 × dim` graph vector.
pub fn encode_graph(tape: &mut Tape, g: &Cedg, vocab: &Vocabulary, cfg: &ModelConfig) -> Result<Var, KernelError> {
    Ok(encode_graph_detailed(tape, g, vocab, cfg)?.vector)
}
