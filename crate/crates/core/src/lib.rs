//! Dual mixture-attention video summarization.
//!
//! A self-contained implementation of key-shot video summarization built
//! around three pieces:
//!
//! - a dual-channel scorer: a visual attention pipeline over frame features
//!   and a sequential pipeline over bidirectional-LSTM encodings, both using
//!   stacked mixture-of-attention layers, joined by a score head;
//! - single-video meta training: a per-video inner loop of plain gradient
//!   descent whose parameter displacement is fed to Adam as a pseudo-gradient;
//! - the full evaluation protocol: kernel temporal segmentation, knapsack
//!   key-shot selection, harmonic-mean F1, Kendall tau-b and Spearman rho
//!   against per-annotator scores, and correlation curves.
//!
//! Matrix numerics, reverse-mode autodiff, and the attention-map rank
//! diagnostics live in their own modules so every layer can be tested in
//! isolation.

pub mod attention;
pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod meta;
pub mod model;
pub mod tensor;

pub use error::{Error, Result};
