//! Tokenization, vocabulary and NLI → triple preparation.

pub mod nli;
pub mod tokenizer;
pub mod vocab;

pub use nli::{
    leakage_guard, prepare_contrastive, read_nli, ContrastiveTriple, DatasetStats,
    LeakageViolation, NliExample, NliLabel,
};
pub use tokenizer::{encode_pair, encode_single, split_words, tokenize, TokenSequence};
pub use vocab::Vocabulary;
