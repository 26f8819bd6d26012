//! Semantic code search for Solidity smart contracts.
//!
//! Functions are split out of source files ([`frontend`]), turned into a
//! typed dependency graph ([`cedg`]) and encoded, together with their token,
//! name and API sequences, by attention networks ([`nnkernel`],
//! [`graph_encoder`], [`encoder`]). A margin ranking objective ([`trainer`])
//! aligns code vectors with docstring vectors so that natural-language
//! queries can be answered by cosine nearest-neighbour search ([`index`]).
//! [`harness`] holds the retrieval metrics, cross-validated evaluation and a
//! synthetic corpus generator.

pub mod cedg;
pub mod encoder;
pub mod frontend;
pub mod graph_encoder;
pub mod harness;
pub mod index;
pub mod nnkernel;
pub mod trainer;
