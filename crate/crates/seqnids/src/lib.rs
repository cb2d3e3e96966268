//! Sequence-based network intrusion detection.
//!
//! `seqnids` classifies flow records with an LSTM over sliding windows of
//! chronologically consecutive records, using learned embeddings for
//! categorical features (protocol, service, state) concatenated with the
//! continuous features. All numerics are built from first principles in
//! 64-bit floats, and every analytic gradient is verifiable against a
//! finite-difference oracle.
//!
//! The crate is organized along the pipeline:
//!
//! - [`numerics`]: dense matrices, activations, softmax, and the
//!   finite-difference gradient oracle.
//! - [`data`]: UNSW-NB15-format CSV ingestion, vocabularies, z-score
//!   normalization, sliding windows, the validation split, a synthetic
//!   generator with planted temporal rules, and a binary record cache.
//! - [`layers`]: embedding lookup, the LSTM cell/sequence with
//!   backpropagation through time, dense layers, dropout, and the model
//!   assembly (LSTM or a context-free MLP baseline).
//! - [`training`]: cross-entropy with many-to-many / many-to-one
//!   aggregation, Adam, the training loop, and checkpoints.
//! - [`evaluation`]: confusion matrices, accuracy / precision / recall /
//!   F1, the multi-to-binary merge, sequence-length sweeps, and
//!   prediction-time benchmarks.
//! - [`cli`]: the `seqnids` command-line front end.
//!
//! The `examples/` directory holds one runnable program per capability;
//! start with `cargo run --release --example synth_temporal`.

pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod layers;
pub mod numerics;
pub mod training;
mod util;

pub use error::{Error, Result};
