//! Answer-focused neural question generation.
//!
//! Everything runs on the CPU from first principles: a minimal reverse-mode
//! autodiff engine ([`tensor`]), a corpus pipeline that aligns answer spans
//! and attaches token features ([`corpus`]), a feature-rich bidirectional
//! LSTM encoder with an answer-specific sentence embedding ([`encoder`]), an
//! attentional decoder with a pointer-generator copy mechanism ([`decoder`]),
//! SGD training with two-phase sentence-encoder pre-training ([`training`]),
//! beam-search inference ([`inference`]), and the automatic-evaluation suite
//! ([`eval`]).

pub mod tensor;

pub use tensor::{Graph, Tensor, TensorRef};

pub mod corpus;
pub mod lstm;
pub mod params;
pub mod decoder;
pub mod encoder;
pub mod model;
pub mod inference;
pub mod eval;
pub mod training;
