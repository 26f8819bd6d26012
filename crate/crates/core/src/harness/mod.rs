//! Retrieval metrics, significance testing, fold-wise evaluation and the
//! synthetic corpus generator.

mod eval;
mod metrics;
mod synth;
mod wilcoxon;

pub use eval::{
    cross_validate, evaluate, evaluate_all, fold_metrics, Embedder, EvalOptions, EvalResult, FoldResult, Latency,
    MeanResult,
};
pub use metrics::{mrr, success_rate_at_k, Rank};
pub use synth::{generate_synthetic_corpus, generate_synthetic_units};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult, EXACT_LIMIT, MIN_PAIRS};

use crate::encoder::EncoderError;
use crate::frontend::FrontendError;
use crate::index::IndexError;
use crate::trainer::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("no queries to evaluate")]
    NoQueries,
    #[error("cutoffs must be at least 1")]
    InvalidCutoff,
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("insufficient data: {0} non-zero differences, need at least {MIN_PAIRS}")]
    InsufficientData(usize),
    #[error("non-finite sample value")]
    NonFinite,
    #[error("cannot generate {requested} units: between 2 and {capacity} supported")]
    SynthSize { requested: usize, capacity: usize },
    #[error("synthetic corpus: {0}")]
    Synth(String),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Train(#[from] TrainError),
}
