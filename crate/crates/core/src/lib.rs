//! Supervised contrastive sentence embeddings trained from NLI triples.
//!
//! The crate covers the whole pipeline: turning labelled NLI pairs into
//! `(anchor, positive, hard negative)` triples, a small transformer encoder with
//! its own reverse-mode autodiff, contrastive pretraining with an optional
//! masked-language-modelling term, downstream fine-tuning heads, and the
//! embedding-geometry metrics used to inspect the result.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod error;
pub mod finetune;
pub mod jsonl;
pub mod optim;
pub mod pretrain;
pub mod rng;
pub mod sweep;
pub mod synthetic;
pub mod tape;
pub mod tensor;
pub mod text;

pub use error::{Error, Result};
