//! Float64 tensor kernel with reverse-mode differentiation and the layers the
//! encoders are built from.

mod checkpoint;
mod config;
mod gradcheck;
mod layers;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, Modalities};
pub use gradcheck::{check_gradients, relative_error, GradCheckReport};
pub use layers::{
    declare_attention, declare_dense, declare_lstm, declare_transformer, dense, lstm_sequence, multi_head_attention,
    positional_encoding, positional_rows, positional_value, ranking_loss, ranking_loss_var, scaled_attention,
    transformer_block, transformer_sequence,
};
pub use optim::Adam;
pub use params::{Init, ParameterStore};
pub use tape::{cosine, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing parameters: {}", .0.join(", "))]
    MissingParameters(Vec<String>),
    #[error("every position is masked; softmax is undefined")]
    AllMasked,
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite gradient for parameter {0}")]
    NanGradient(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
