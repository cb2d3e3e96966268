//! Neural building blocks: embedding lookup, LSTM cell and sequence, dense
//! layers, dropout, and the assembled classification model with its
//! analytic backward pass.

pub mod dense;
pub mod embedding;
pub mod lstm;
pub mod model;

pub use dense::{dense_forward, dropout};
pub use embedding::{assemble_input, assemble_input_ordinal, embed_lookup, EmbeddingTable};
pub use lstm::{lstm_sequence, lstm_step, LstmParams};
pub use model::{
    min_kink_distance, model_backward, model_forward, predict_probs, window_loss, EmbedMode,
    ModelConfig, ModelKind, ModelParams, Task,
};
