//! Whitespace + punctuation tokenization and model input encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::vocab::{Vocabulary, CLS, PAD, SEP};

/// Lowercases `text` and splits it on whitespace; every character that is
/// neither alphanumeric nor whitespace becomes its own token.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_lowercase().collect());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Collapses runs of whitespace to single spaces and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Token ids plus a mask that is 1 exactly on non-`[PAD]` positions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub attention_mask: Vec<u8>,
}

impl TokenSequence {
    pub fn from_ids(ids: Vec<usize>) -> Self {
        let attention_mask = ids.iter().map(|&i| u8::from(i != PAD)).collect();
        TokenSequence {
            ids,
            attention_mask,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().map(|&m| m as usize).sum()
    }

    /// Same sequence with trailing padding removed.
    pub fn unpadded(&self) -> TokenSequence {
        let n = self
            .attention_mask
            .iter()
            .rposition(|&m| m == 1)
            .map_or(0, |p| p + 1);
        TokenSequence {
            ids: self.ids[..n].to_vec(),
            attention_mask: self.attention_mask[..n].to_vec(),
        }
    }

    pub fn pad_to(&self, len: usize) -> TokenSequence {
        let mut ids = self.ids.clone();
        ids.resize(len.max(ids.len()), PAD);
        TokenSequence::from_ids(ids)
    }
}

/// Maps text to vocabulary ids without special tokens, truncated to `max_len`.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    let ids = split_words(text)
        .iter()
        .take(max_len)
        .map(|w| vocab.id(w))
        .collect();
    TokenSequence::from_ids(ids)
}

fn word_ids(text: &str, vocab: &Vocabulary) -> Vec<usize> {
    split_words(text).iter().map(|w| vocab.id(w)).collect()
}

/// `[CLS] a [SEP]`, truncated and padded to `max_len`.
pub fn encode_single(text: &str, vocab: &Vocabulary, max_len: usize) -> Result<TokenSequence> {
    if max_len < 3 {
        return Err(Error::Config(format!(
            "max_len must be at least 3 for single-sentence encoding, got {max_len}"
        )));
    }
    let mut a = word_ids(text, vocab);
    a.truncate(max_len - 2);
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS);
    ids.extend(a);
    ids.push(SEP);
    ids.resize(max_len, PAD);
    Ok(TokenSequence::from_ids(ids))
}

/// `[CLS] a [SEP] b [SEP]`, padded to `max_len`. When too long, one token is
/// dropped from the end of the longer segment at a time.
pub fn encode_pair(a: &str, b: &str, vocab: &Vocabulary, max_len: usize) -> Result<TokenSequence> {
    if max_len < 4 {
        return Err(Error::Config(format!(
            "max_len must be at least 4 for pair encoding, got {max_len}"
        )));
    }
    let mut a = word_ids(a, vocab);
    let mut b = word_ids(b, vocab);
    while a.len() + b.len() + 3 > max_len {
        if a.len() > b.len() {
            a.pop();
        } else {
            b.pop();
        }
    }
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS);
    ids.extend(a);
    ids.push(SEP);
    ids.extend(b);
    ids.push(SEP);
    ids.resize(max_len, PAD);
    Ok(TokenSequence::from_ids(ids))
}
