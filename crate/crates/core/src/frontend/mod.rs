//! Solidity ingestion: unit extraction, textual modalities and vocabulary.

mod extract;
pub mod lexer;
mod tokenize;
mod vocab;
pub mod words;

pub use extract::{
    deduplicate, extract_functions, normalized_source, read_corpus, write_corpus, FunctionUnit, UnitKind,
};
pub(crate) use tokenize::{call_paren, split_header_body};
pub use tokenize::{tokenize_code, Caps, TokenBundle, WordSeq};
pub use vocab::{Vocabulary, PAD, UNK};

#[derive(Debug, thiserror::Error)]
pub enum FrontendError {
    #[error("unbalanced braces at byte offset {offset}")]
    UnbalancedBraces { offset: usize },
    #[error("corpus line {line}: {message}")]
    Corpus { line: usize, message: String },
}
