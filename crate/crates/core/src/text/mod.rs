//! Tokenization, vocabulary indexing and fixed-length sequence preparation.
//!
//! Index 0 is PAD and index 1 is UNK; pretrained tokens follow in table order.
//! Sequences are padded and truncated at the *front*, so the tail of every
//! post is kept.

mod embedding;
mod tokenize;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use embedding::{
    format_embedding_text, load_embedding_file, parse_embedding_text, synthetic_embeddings, write_embedding_file,
    EmbeddingTable,
};
pub use tokenize::{is_cjk, is_punctuation, strip_punctuation, tokenize, tokenize_with, Tokenizer, TokenizerKind};

pub const PAD: usize = 0;
pub const UNK: usize = 1;

pub type TokenSequence = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i + 2)).collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub fn size(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// SHA-256 over the newline-joined token list, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Vocabulary over the pretrained table's tokens. `corpus` only feeds the
/// out-of-vocabulary log line; absent tokens encode as UNK.
pub fn build_vocab(corpus: &[Vec<String>], table_tokens: &[String]) -> Result<Vocabulary> {
    let vocab = Vocabulary::from(table_tokens.to_vec());
    if vocab.index.len() != table_tokens.len() {
        let mut seen = HashMap::new();
        for (i, t) in table_tokens.iter().enumerate() {
            if seen.insert(t, i).is_some() {
                return Err(Error::Format { line: i + 2, msg: format!("duplicate table token `{t}`") });
            }
        }
    }
    let total: usize = corpus.iter().map(Vec::len).sum();
    if total > 0 {
        let oov = corpus.iter().flatten().filter(|t| vocab.get(t).is_none()).count();
        log::info!("vocabulary size {}, corpus OOV rate {:.4}", vocab.size(), oov as f64 / total as f64);
    }
    Ok(vocab)
}

pub fn encode(tokens: &[String], vocab: &Vocabulary) -> TokenSequence {
    tokens.iter().map(|t| vocab.get(t).unwrap_or(UNK)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max_tokens: usize,
}

/// `max_tokens = round_half_up(mean + 2 * std)`, at least 1.
pub fn compute_max_tokens(lengths: &[usize]) -> Result<LengthStats> {
    if lengths.is_empty() {
        return Err(Error::domain("cannot compute length statistics of an empty corpus"));
    }
    let n = lengths.len() as f64;
    let mean = lengths.iter().map(|&l| l as f64).sum::<f64>() / n;
    let var = lengths.iter().map(|&l| (l as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let max_tokens = ((mean + 2.0 * std + 0.5).floor() as usize).max(1);
    Ok(LengthStats { mean, std, max_tokens })
}

/// Share of sequences no longer than `max_tokens`.
pub fn coverage_fraction(lengths: &[usize], max_tokens: usize) -> Result<f64> {
    if lengths.is_empty() {
        return Err(Error::domain("cannot compute coverage of an empty corpus"));
    }
    Ok(lengths.iter().filter(|&&l| l <= max_tokens).count() as f64 / lengths.len() as f64)
}

/// Front-pads with PAD or keeps the last `max_tokens` indices.
pub fn pad_truncate_pre(seq: &[usize], max_tokens: usize) -> TokenSequence {
    if seq.len() >= max_tokens {
        seq[seq.len() - max_tokens..].to_vec()
    } else {
        let mut out = vec![PAD; max_tokens - seq.len()];
        out.extend_from_slice(seq);
        out
    }
}

/// Everything needed to turn raw text into model input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextPipeline {
    pub tokenizer: TokenizerKind,
    pub vocab: Vocabulary,
    pub max_tokens: usize,
}

impl TextPipeline {
    pub fn tokens(&self, text: &str) -> Vec<String> {
        tokenize_with(text, &self.tokenizer)
    }

    /// Tokenize, encode and pad. Text that is empty after tokenization becomes
    /// a single UNK so at least one position is unmasked.
    pub fn prepare(&self, text: &str) -> TokenSequence {
        let mut seq = encode(&self.tokens(text), &self.vocab);
        if seq.is_empty() {
            seq.push(UNK);
        }
        pad_truncate_pre(&seq, self.max_tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn vocab_layout() {
        let v = build_vocab(&[], &toks(&["a", "b"])).unwrap();
        assert_eq!((v.get("a"), v.get("b"), v.size()), (Some(2), Some(3), 4));
        assert_eq!(build_vocab(&[], &[]).unwrap().size(), 2);
        let many: Vec<String> = (0..1000).map(|i| format!("t{i}")).collect();
        assert_eq!(build_vocab(&[], &many).unwrap().size(), 1002);
        assert!(matches!(build_vocab(&[], &toks(&["a", "b", "a"])), Err(Error::Format { line: 4, .. })));
    }

    #[test]
    fn encode_maps_oov_to_unk() {
        let v = build_vocab(&[], &toks(&["a", "b"])).unwrap();
        assert_eq!(encode(&toks(&["a", "b"]), &v), vec![2, 3]);
        assert_eq!(encode(&toks(&["a", "zz"]), &v), vec![2, 1]);
        assert!(encode(&[], &v).is_empty());
    }

    #[test]
    fn length_stats() {
        let s = compute_max_tokens(&[10, 10, 10]).unwrap();
        assert_eq!((s.mean, s.std, s.max_tokens), (10.0, 0.0, 10));
        let s = compute_max_tokens(&[4, 6]).unwrap();
        assert_eq!((s.mean, s.std, s.max_tokens), (5.0, 1.0, 7));
        assert_eq!(compute_max_tokens(&[0, 0]).unwrap().max_tokens, 1);
        assert!(compute_max_tokens(&[]).is_err());
    }

    #[test]
    fn coverage() {
        assert_eq!(coverage_fraction(&[1, 2, 3, 4], 3).unwrap(), 0.75);
        assert_eq!(coverage_fraction(&[7, 2, 9], 9).unwrap(), 1.0);
        assert_eq!(coverage_fraction(&[5], 4).unwrap(), 0.0);
        assert!(coverage_fraction(&[], 4).is_err());
    }

    #[test]
    fn pre_padding_and_truncation() {
        assert_eq!(pad_truncate_pre(&[5, 7], 4), vec![0, 0, 5, 7]);
        assert_eq!(pad_truncate_pre(&[1, 2, 3, 4, 5], 3), vec![3, 4, 5]);
        assert_eq!(pad_truncate_pre(&[9], 1), vec![9]);
    }

    #[test]
    fn pipeline_guards_empty_text() {
        let p = TextPipeline { tokenizer: TokenizerKind::Whitespace, vocab: toks(&["up"]).into(), max_tokens: 3 };
        assert_eq!(p.prepare("!!"), vec![0, 0, UNK]);
        assert_eq!(p.prepare("up, up down"), vec![2, 2, UNK]);
    }

    proptest! {
        #[test]
        fn coverage_monotone(lengths in proptest::collection::vec(0usize..50, 1..40), a in 0usize..60, b in 0usize..60) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(coverage_fraction(&lengths, lo).unwrap() <= coverage_fraction(&lengths, hi).unwrap());
        }

        #[test]
        fn vocab_serde_round_trip(words in proptest::collection::btree_set("[a-z]{1,6}", 0..20)) {
            let v = build_vocab(&[], &words.into_iter().collect::<Vec<_>>()).unwrap();
            let json = serde_json::to_string(&v).unwrap();
            prop_assert_eq!(serde_json::from_str::<Vocabulary>(&json).unwrap(), v);
        }
    }
}
