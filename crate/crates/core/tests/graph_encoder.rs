use cedgsearch::cedg::{build_cedg, Cedg, CedgEdge, CedgNode, EdgeType, NodeCategory};
use cedgsearch::frontend::{extract_functions, Vocabulary};
use cedgsearch::graph_encoder::*;
use cedgsearch::nnkernel::{check_gradients, ModelConfig, ParameterStore, Tape, Tensor};

fn vocab() -> Vocabulary {
    let words: Vec<String> = ["amount", "deposits", "transfer", "withdraw", "msg", "sender", "owner"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    Vocabulary::build([words].iter(), 1)
}

fn config(dim: usize, heads: usize, max_nodes: usize) -> ModelConfig {
    ModelConfig { max_nodes, ..ModelConfig::with_dims(dim, dim, 2, heads).unwrap() }
}

fn store(cfg: &ModelConfig, v: &Vocabulary, seed: u64) -> ParameterStore {
    let mut s = ParameterStore::new(seed);
    declare_graph_params(&mut s, cfg, v.len());
    s
}

fn node(id: usize, category: NodeCategory, ty: &str, name: &str) -> CedgNode {
    CedgNode { id, category, sol_type: ty.into(), name: name.into() }
}

fn edge(vs: usize, ve: usize, etype: EdgeType, order: usize) -> CedgEdge {
    CedgEdge { vs, ve, etype, order }
}

fn withdraw() -> Cedg {
    let src = include_str!("../fixtures/withdraw.sol");
    let units = extract_functions(src, "withdraw.sol").unwrap();
    build_cedg(&units[0], &units)
}

#[test]
fn node_vectors_have_width_dim_and_depend_only_on_attributes() {
    let v = vocab();
    let cfg = config(64, 8, 32);
    let s = store(&cfg, &v, 1);
    let g = Cedg {
        nodes: vec![
            node(0, NodeCategory::Variable, "uint", "amount"),
            node(1, NodeCategory::Variable, "uint", "amount"),
            node(2, NodeCategory::Invocation, "external", "transfer"),
        ],
        edges: vec![],
    };
    let mut tape = Tape::new(&s);
    let h = init_node_vectors(&mut tape, &g, &v).unwrap();
    let t = tape.value(h);
    assert_eq!(t.dims(), (3, 64));
    assert_eq!(t.row_slice(0), t.row_slice(1));
    assert_ne!(t.row_slice(0), t.row_slice(2));
}

#[test]
fn fallback_node_ignores_word_embeddings() {
    let v = vocab();
    let cfg = config(8, 2, 4);
    let s = store(&cfg, &v, 2);
    let g = Cedg { nodes: vec![node(0, NodeCategory::Fallback, "fallback", "0")], edges: vec![] };
    let run = |s: &ParameterStore| {
        let mut tape = Tape::new(s);
        let h = init_node_vectors(&mut tape, &g, &v).unwrap();
        tape.value(h).clone()
    };
    let before = run(&s);
    let mut perturbed = s.clone();
    let table = perturbed.get_mut("graph.name_emb").unwrap();
    let cols = table.cols();
    for x in &mut table.data[..v.len() * cols] {
        *x += 1.0;
    }
    assert_eq!(run(&perturbed), before);
}

#[test]
fn edge_vectors_encode_type_and_order() {
    let v = vocab();
    let cfg = config(8, 2, 4);
    let s = store(&cfg, &v, 3);
    let edges = [edge(0, 0, EdgeType::AS, 1), edge(0, 0, EdgeType::AS, 1), edge(0, 0, EdgeType::AS, 2)];
    let mut tape = Tape::new(&s);
    let e = init_edge_vectors(&mut tape, &edges, 8).unwrap();
    let t = tape.value(e);
    assert_eq!(t.dims(), (3, 8));
    assert_eq!(t.row_slice(0), t.row_slice(1));
    assert_ne!(t.row_slice(0), t.row_slice(2));
}

#[test]
fn attention_normalizes_per_source_node() {
    let v = vocab();
    let cfg = config(16, 4, 32);
    let s = store(&cfg, &v, 4);
    let g = withdraw();
    assert_eq!(g.edges.len(), 12);
    let mut tape = Tape::new(&s);
    let enc = encode_graph_detailed(&mut tape, &g, &v, &cfg).unwrap();
    for alpha in &enc.attention[0] {
        let a = tape.value(*alpha);
        let mut sums = vec![0.0; g.nodes.len()];
        for (k, e) in enc.edge_list.iter().enumerate() {
            sums[e.vs] += a.data[k];
        }
        for (i, total) in sums.iter().enumerate() {
            if enc.edge_list.iter().any(|e| e.vs == i) {
                assert!((total - 1.0).abs() < 1e-9, "node {i}: {total}");
            }
        }
        // A node with exactly one triple puts all of its weight on it.
        let single: Vec<usize> = (0..g.nodes.len())
            .filter(|&i| enc.edge_list.iter().filter(|e| e.vs == i).count() == 1)
            .collect();
        for i in single {
            let k = enc.edge_list.iter().position(|e| e.vs == i).unwrap();
            assert_eq!(a.data[k], 1.0);
        }
    }
    assert_eq!(tape.value(enc.vector).dims(), (1, 16));
}

#[test]
fn equal_scores_split_attention_evenly() {
    let v = vocab();
    let cfg = config(8, 2, 4);
    let s = store(&cfg, &v, 5);
    let g = Cedg {
        nodes: vec![
            node(0, NodeCategory::Invocation, "public", "withdraw"),
            node(1, NodeCategory::Variable, "uint", "amount"),
            node(2, NodeCategory::Variable, "uint", "amount"),
        ],
        edges: vec![edge(0, 1, EdgeType::AC, 1), edge(0, 2, EdgeType::AC, 1)],
    };
    let mut tape = Tape::new(&s);
    let enc = encode_graph_detailed(&mut tape, &g, &v, &cfg).unwrap();
    for alpha in &enc.attention[0] {
        assert_eq!(tape.value(*alpha).data, vec![0.5, 0.5]);
    }
}

#[test]
fn isolated_nodes_keep_their_vector() {
    let v = vocab();
    let cfg = config(8, 2, 4);
    let s = store(&cfg, &v, 6);
    let g = Cedg {
        nodes: vec![node(0, NodeCategory::Invocation, "public", "withdraw"), node(1, NodeCategory::Variable, "uint", "amount")],
        edges: vec![edge(0, 1, EdgeType::BS, 1)],
    };
    let mut tape = Tape::new(&s);
    let enc = encode_graph_detailed(&mut tape, &g, &v, &cfg).unwrap();
    assert_eq!(tape.value(enc.updated).row_slice(1), tape.value(enc.nodes).row_slice(1));
    assert_ne!(tape.value(enc.updated).row_slice(0), tape.value(enc.nodes).row_slice(0));
}

#[test]
fn edge_listing_order_is_irrelevant() {
    let v = vocab();
    let cfg = config(8, 2, 8);
    let s = store(&cfg, &v, 7);
    let g = withdraw();
    let mut shuffled = g.clone();
    shuffled.edges.reverse();
    shuffled.edges.swap(0, 5);
    let run = |g: &Cedg| {
        let mut tape = Tape::new(&s);
        let enc = encode_graph_detailed(&mut tape, g, &v, &cfg).unwrap();
        (tape.value(enc.updated).clone(), tape.value(enc.vector).clone())
    };
    assert_eq!(run(&g), run(&shuffled));
}

#[test]
fn readout_is_ordered_and_padded() {
    let v = vocab();
    let cfg = config(8, 2, 4);
    let s = store(&cfg, &v, 8);
    let a = node(0, NodeCategory::Invocation, "public", "withdraw");
    let b = node(1, NodeCategory::Variable, "uint", "amount");
    let g1 = Cedg { nodes: vec![a.clone(), b.clone()], edges: vec![] };
    let g2 = Cedg { nodes: vec![CedgNode { id: 0, ..b }, CedgNode { id: 1, ..a.clone() }], edges: vec![] };
    let vec_of = |g: &Cedg| {
        let mut tape = Tape::new(&s);
        let out = encode_graph(&mut tape, g, &v, &cfg).unwrap();
        tape.value(out).clone()
    };
    assert_ne!(vec_of(&g1), vec_of(&g2));

    // A single node fills slot 0; the other three slots are zero.
    let single = Cedg { nodes: vec![a], edges: vec![] };
    let mut tape = Tape::new(&s);
    let h = init_node_vectors(&mut tape, &single, &v).unwrap();
    let hv = tape.value(h).clone();
    let out = graph_readout(&mut tape, h, 4).unwrap();
    let (w, bias) = (s.get("graph.readout.w").unwrap(), s.get("graph.readout.b").unwrap());
    for j in 0..8 {
        let expected: f64 = bias.data[j] + (0..8).map(|i| hv.data[i] * w.get(i, j)).sum::<f64>();
        assert!((tape.value(out).data[j] - expected).abs() < 1e-12);
    }
    assert_eq!(tape.value(out).dims(), (1, 8));
}

#[test]
fn graph_gradients_match_finite_differences() {
    let v = vocab();
    let cfg = ModelConfig { hops: 2, ..config(8, 2, 4) };
    let mut s = store(&cfg, &v, 9);
    // Nonzero biases so their gradients are informative.
    for name in ["graph.node_proj.b", "graph.readout.b"] {
        let t = s.get_mut(name).unwrap();
        let n = t.data.len();
        *t = Tensor::row((0..n).map(|i| 0.1 * i as f64 - 0.2).collect());
    }
    let g = Cedg {
        nodes: vec![
            node(0, NodeCategory::Invocation, "public", "withdraw"),
            node(1, NodeCategory::Variable, "uint", "amount"),
            node(2, NodeCategory::Fallback, "fallback", "0"),
        ],
        edges: vec![
            edge(0, 1, EdgeType::BS, 1),
            edge(1, 1, EdgeType::AC, 2),
            edge(1, 0, EdgeType::AS, 3),
            edge(2, 0, EdgeType::FB, 4),
            edge(0, 0, EdgeType::BE, 5),
        ],
    };
    let report = check_gradients(&s, 1e-5, &|tape| encode_graph(tape, &g, &v, &cfg)).unwrap();
    assert!(report.max_relative_error < 1e-4, "{report:?}");
    assert!(report.parameters_checked >= 12, "{report:?}");
}
