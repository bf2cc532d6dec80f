//! Desk-scale entity linking over a local knowledge graph.
//!
//! The pipeline has three stages: an attentive seq2seq model extracts entity
//! surface forms from text, an alias-indexed local KG turns each surface form
//! into scored entity candidates, and a second seq2seq model disambiguates
//! among the candidates. Everything runs on a small reverse-mode autodiff
//! tensor core ([`tensor`], [`tape`]) so the model math is checkable against
//! finite differences and straight-line oracles.
//!
//! With the default `parallel` feature the hot loops (matrix products,
//! candidate scoring, per-sentence evaluation) run on rayon; disabling the
//! feature falls back to sequential code paths that produce bit-identical
//! results.

pub mod corpus;
pub mod embed;
pub mod eval;
pub mod gradcheck;
pub mod kg;
pub mod lstm;
pub mod optim;
pub mod pipeline;
pub mod seq2seq;
pub mod tape;
pub mod tensor;
pub mod util;
pub mod vocab;

pub use tape::{Tape, Var};
pub use tensor::{Tensor, TensorError};
