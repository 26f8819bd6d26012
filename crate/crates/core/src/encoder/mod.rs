//! Code and query encoders.
//!
//! Code: each enabled textual modality (code tokens, name words, API words)
//! runs through its own transformer block; the graph runs through the graph
//! encoder. The four `dim`-wide results form a four-step sequence (token,
//! name, API, graph) fed to an LSTM whose final hidden state goes through a
//! dense layer. Disabled or empty modalities contribute a zero step.
//!
//! Query: normalized words run through a dedicated transformer block and a
//! projection to the output width, or are delegated to an external provider.

mod provider;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use provider::{EmbeddingProvider, ProcessProvider};

use crate::cedg::{build_cedg, Cedg};
use crate::frontend::words::{normalize_text, split_identifier};
use crate::frontend::{tokenize_code, FunctionUnit, TokenBundle, Vocabulary};
use crate::graph_encoder::{declare_graph_params, encode_graph};
use crate::nnkernel::{
    declare_dense, declare_lstm, declare_transformer, dense, lstm_sequence, positional_rows, read_checkpoint,
    transformer_block, write_checkpoint, Init, KernelError, ModelConfig, ParameterStore, Tape, Tensor, Var,
};

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("empty code unit: every enabled modality is empty")]
    EmptyCodeUnit,
    #[error("empty query text")]
    EmptyQuery,
    #[error("embedding width mismatch: expected {expected}, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("embedding provider: {0}")]
    Provider(String),
    #[error("checkpoint metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Vocabulary ids of the three textual modalities plus the graph of one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeInput {
    pub tokens: Vec<usize>,
    pub name: Vec<usize>,
    pub api: Vec<usize>,
    pub graph: Cedg,
}

/// A code vector with the id of the unit it encodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeEmbedding {
    pub id: String,
    pub vector: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: ModelConfig,
    vocab: Vocabulary,
}

/// Parameters, configuration and vocabulary of a trained (or fresh) model.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSearchModel {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParameterStore,
}

/// Words contributed by one unit to the vocabulary: code tokens, name and
/// API words, and the words of graph node names.
pub fn unit_words(bundle: &TokenBundle, graph: &Cedg) -> Vec<String> {
    let mut words: Vec<String> =
        bundle.tokens.words.iter().chain(&bundle.name.words).chain(&bundle.api.words).cloned().collect();
    for n in &graph.nodes {
        words.extend(split_identifier(&n.name));
    }
    words
}

/// Declares every parameter the configuration needs.
pub fn declare_model_params(store: &mut ParameterStore, cfg: &ModelConfig, vocab_len: usize) {
    let (d, dk, heads) = (cfg.dim, cfg.head_dim, cfg.heads);
    let m = cfg.modalities;
    for (on, key) in [(m.tokens, "T"), (m.name, "F"), (m.api, "A"), (true, "Q")] {
        if on {
            store.declare(&format!("text.{key}.emb"), vocab_len, d, Init::Uniform { fan_in: 1 });
            declare_transformer(store, &format!("text.{key}"), d, dk, heads);
        }
    }
    declare_dense(store, "query.proj", d, cfg.out_dim);
    if m.graph {
        declare_graph_params(store, cfg, vocab_len);
    }
    declare_lstm(store, "fusion.lstm", d, cfg.out_dim);
    declare_dense(store, "fusion.dense", cfg.out_dim, cfg.out_dim);
}

/// Embedding lookup plus position encoding, then a pooled transformer block.
fn text_forward(tape: &mut Tape, key: &str, ids: &[usize], cfg: &ModelConfig) -> Result<Var, KernelError> {
    let table = tape.param(&format!("text.{key}.emb"))?;
    let rows = tape.gather_rows(table, &ids.iter().map(|&i| Some(i)).collect::<Vec<_>>());
    let pe = tape.constant(positional_rows(0..ids.len(), cfg.dim)?);
    let x = tape.add(rows, pe);
    transformer_block(tape, x, &format!("text.{key}"), cfg.heads, &vec![true; ids.len()])
}

/// Records the code encoder on `tape`; returns the `1 × out_dim` code vector.
pub fn code_forward(
    tape: &mut Tape,
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    input: &CodeInput,
) -> Result<Var, EncoderError> {
    let m = cfg.modalities;
    let graph_present = !input.graph.edges.is_empty();
    let present = (m.tokens && !input.tokens.is_empty())
        || (m.name && !input.name.is_empty())
        || (m.api && !input.api.is_empty())
        || (m.graph && graph_present);
    if !present {
        return Err(EncoderError::EmptyCodeUnit);
    }
    let mut steps = Vec::with_capacity(4);
    for (on, key, ids) in [(m.tokens, "T", &input.tokens), (m.name, "F", &input.name), (m.api, "A", &input.api)] {
        steps.push(if on && !ids.is_empty() {
            text_forward(tape, key, ids, cfg)?
        } else {
            tape.constant(Tensor::zeros(1, cfg.dim))
        });
    }
    steps.push(if m.graph && graph_present {
        encode_graph(tape, &input.graph, vocab, cfg)?
    } else {
        tape.constant(Tensor::zeros(1, cfg.dim))
    });
    let hidden = lstm_sequence(tape, &steps, "fusion.lstm")?;
    Ok(dense(tape, hidden, "fusion.dense")?)
}

/// Records the query encoder on `tape`; returns the `1 × out_dim` query vector.
pub fn query_forward(tape: &mut Tape, cfg: &ModelConfig, ids: &[usize]) -> Result<Var, EncoderError> {
    if ids.is_empty() {
        return Err(EncoderError::EmptyQuery);
    }
    let pooled = text_forward(tape, "Q", ids, cfg)?;
    Ok(dense(tape, pooled, "query.proj")?)
}

fn finite_nonzero(v: Vec<f64>) -> Result<Vec<f64>, EncoderError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(EncoderError::Kernel(KernelError::Shape("non-finite embedding".into())));
    }
    if v.iter().all(|&x| x == 0.0) {
        return Err(EncoderError::Kernel(KernelError::ZeroVector));
    }
    Ok(v)
}

impl CodeSearchModel {
    /// A freshly initialized model.
    pub fn new(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut params = ParameterStore::new(seed);
        declare_model_params(&mut params, &config, vocab.len());
        Ok(CodeSearchModel { config, vocab, params })
    }

    /// Query words after normalization and capping.
    pub fn query_words(&self, text: &str) -> Vec<String> {
        let mut words = normalize_text(text);
        words.truncate(self.config.caps.tokens);
        words
    }

    pub fn query_ids(&self, text: &str) -> Result<Vec<usize>, EncoderError> {
        let words = self.query_words(text);
        if words.is_empty() {
            return Err(EncoderError::EmptyQuery);
        }
        Ok(self.vocab.ids(&words))
    }

    pub fn prepare_code(&self, bundle: &TokenBundle, graph: Cedg) -> CodeInput {
        CodeInput {
            tokens: self.vocab.ids(&bundle.tokens.words),
            name: self.vocab.ids(&bundle.name.words),
            api: self.vocab.ids(&bundle.api.words),
            graph,
        }
    }

    /// Tokenizes `unit` and builds its graph against `context`.
    pub fn prepare_unit(&self, unit: &FunctionUnit, context: &[FunctionUnit]) -> CodeInput {
        let bundle = tokenize_code(unit, self.config.caps);
        self.prepare_code(&bundle, build_cedg(unit, context))
    }

    pub fn encode_code(&self, input: &CodeInput) -> Result<Vec<f64>, EncoderError> {
        let mut tape = Tape::new(&self.params);
        let out = code_forward(&mut tape, &self.config, &self.vocab, input)?;
        finite_nonzero(tape.value(out).data.clone())
    }

    pub fn encode_query(&self, text: &str) -> Result<Vec<f64>, EncoderError> {
        self.encode_query_ids(&self.query_ids(text)?)
    }

    /// Encodes already normalized query words, capped like query text.
    pub fn encode_query_words(&self, words: &[String]) -> Result<Vec<f64>, EncoderError> {
        let capped = &words[..words.len().min(self.config.caps.tokens)];
        self.encode_query_ids(&self.vocab.ids(capped))
    }

    fn encode_query_ids(&self, ids: &[usize]) -> Result<Vec<f64>, EncoderError> {
        let mut tape = Tape::new(&self.params);
        let out = query_forward(&mut tape, &self.config, ids)?;
        finite_nonzero(tape.value(out).data.clone())
    }

    /// Encodes with an external provider when one is given, checking its width.
    pub fn encode_query_with(
        &self,
        text: &str,
        provider: Option<&mut dyn EmbeddingProvider>,
    ) -> Result<Vec<f64>, EncoderError> {
        let Some(p) = provider else {
            return self.encode_query(text);
        };
        if self.query_words(text).is_empty() {
            return Err(EncoderError::EmptyQuery);
        }
        let v = p.embed(text)?;
        if v.len() != self.config.out_dim {
            return Err(EncoderError::WidthMismatch { expected: self.config.out_dim, actual: v.len() });
        }
        finite_nonzero(v)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), EncoderError> {
        let meta = serde_json::to_string(&Metadata { config: self.config.clone(), vocab: self.vocab.clone() })?;
        write_checkpoint(w, &meta, &self.params)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, EncoderError> {
        let (meta, params) = read_checkpoint(r)?;
        let Metadata { config, vocab } = serde_json::from_str(&meta)?;
        config.validate()?;
        let mut expected = ParameterStore::new(params.seed);
        declare_model_params(&mut expected, &config, vocab.len());
        let missing: Vec<String> = expected.names().filter(|n| !params.contains(n)).map(str::to_string).collect();
        if !missing.is_empty() {
            return Err(KernelError::MissingParameters(missing).into());
        }
        Ok(CodeSearchModel { config, vocab, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), EncoderError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EncoderError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
