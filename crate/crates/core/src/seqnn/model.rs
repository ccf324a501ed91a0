//! The phase-1 sentiment network: frozen (or trainable) embedding lookup,
//! BiGRU stack, multiplicative self-attention, mean pool over real tokens,
//! dense sigmoid head.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::attention::{attention_backward, attention_forward_cached, AttentionCache, AttentionParams};
use super::gru::{bigru_backward, bigru_forward_cached, BiGruCache, BiGruLayer};
use super::linalg::{dot, sigmoid, Matrix};
use crate::error::{Error, Result};
use crate::rng;
use crate::text::{EmbeddingTable, TokenSequence, PAD};

const BCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Two BiGRU layers of 32 and 16 units per direction.
    Desk,
    /// Seven BiGRU layers, 256 down to 4 units per direction.
    Full,
}

impl Preset {
    pub fn hidden(self) -> Vec<usize> {
        match self {
            Preset::Desk => vec![32, 16],
            Preset::Full => vec![256, 128, 64, 32, 16, 8, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentimentConfig {
    /// Units per direction for each BiGRU layer, bottom first.
    pub hidden: Vec<usize>,
    pub heads: usize,
    /// Width of the attention projection; defaults to its input width.
    pub attention_out: Option<usize>,
    pub train_embeddings: bool,
}

impl SentimentConfig {
    pub fn preset(p: Preset) -> Self {
        SentimentConfig { hidden: p.hidden(), heads: 4, attention_out: None, train_embeddings: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("sentiment model needs at least one non-empty BiGRU layer"));
        }
        if self.heads == 0 || self.attention_out == Some(0) {
            return Err(Error::config("attention needs at least one head and a positive width"));
        }
        Ok(())
    }
}

impl Default for SentimentConfig {
    fn default() -> Self {
        SentimentConfig::preset(Preset::Desk)
    }
}

/// Every trainable tensor except the embedding table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub layers: Vec<BiGruLayer>,
    pub attention: AttentionParams,
    pub dense_w: Vec<f64>,
    pub dense_b: Vec<f64>,
}

impl Weights {
    pub fn zeros_like(&self) -> Self {
        Weights {
            layers: self.layers.iter().map(BiGruLayer::zeros_like).collect(),
            attention: self.attention.zeros_like(),
            dense_w: vec![0.0; self.dense_w.len()],
            dense_b: vec![0.0; self.dense_b.len()],
        }
    }

    /// Named tensors with shapes, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (dir, p) in [("forward", &layer.forward), ("backward", &layer.backward)] {
                for (name, shape, data) in p.tensors() {
                    out.push((format!("layers.{i}.{dir}.{name}"), shape, data));
                }
            }
        }
        for (k, h) in self.attention.heads.iter().enumerate() {
            out.push((format!("attention.heads.{k}"), vec![h.rows, h.cols], &h.data[..]));
        }
        let w_o = &self.attention.w_o;
        out.push(("attention.w_o".into(), vec![w_o.rows, w_o.cols], &w_o.data[..]));
        out.push(("dense.w".into(), vec![self.dense_w.len()], &self.dense_w[..]));
        out.push(("dense.b".into(), vec![1], &self.dense_b[..]));
        out
    }

    /// Same order as [`Weights::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for layer in &mut self.layers {
            out.extend(layer.forward.tensors_mut());
            out.extend(layer.backward.tensors_mut());
        }
        for h in &mut self.attention.heads {
            out.push(&mut h.data);
        }
        out.push(&mut self.attention.w_o.data);
        out.push(&mut self.dense_w);
        out.push(&mut self.dense_b);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.2.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
    }

    pub fn add_assign(&mut self, other: &Weights) {
        let src: Vec<&[f64]> = other.tensors().into_iter().map(|t| t.2).collect();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            for (a, b) in dst.iter_mut().zip(s) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= c);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Weights,
    /// Present when embeddings are trainable; the PAD row is always zero.
    pub embedding: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentModel {
    pub config: SentimentConfig,
    pub embedding: EmbeddingTable,
    pub weights: Weights,
    pub max_tokens: usize,
}

struct ForwardCache {
    inputs: Vec<Vec<Vec<f64>>>,
    layers: Vec<BiGruCache>,
    top: Matrix,
    attention: AttentionCache,
    mask: Vec<bool>,
    pooled: Vec<f64>,
    prob: f64,
}

impl SentimentModel {
    /// Glorot-initialised model drawn from `seed`.
    pub fn new(config: SentimentConfig, embedding: EmbeddingTable, max_tokens: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        embedding.validate()?;
        if max_tokens == 0 {
            return Err(Error::domain("max_tokens must be >= 1"));
        }
        let mut r = rng::seeded(seed);
        let mut input = embedding.dim;
        let mut layers = Vec::with_capacity(config.hidden.len());
        for &h in &config.hidden {
            layers.push(BiGruLayer::glorot(h, input, &mut r));
            input = 2 * h;
        }
        let d_out = config.attention_out.unwrap_or(input);
        let attention = AttentionParams::glorot(config.heads, input, d_out, &mut r);
        let dense = Matrix::glorot(1, d_out, &mut r);
        let weights = Weights { layers, attention, dense_w: dense.data, dense_b: vec![0.0] };
        Ok(SentimentModel { config, embedding, weights, max_tokens })
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.embedding.validate()?;
        let w = &self.weights;
        if w.layers.len() != self.config.hidden.len() {
            return Err(Error::domain("layer count does not match config"));
        }
        let mut input = self.embedding.dim;
        for (layer, &h) in w.layers.iter().zip(&self.config.hidden) {
            if layer.hidden() != h
                || layer.input() != input
                || layer.backward.hidden() != h
                || layer.backward.input() != input
            {
                return Err(Error::domain("BiGRU layer widths inconsistent"));
            }
            input = layer.output_width();
        }
        if w.attention.input_width() != input || w.attention.n_heads() != self.config.heads {
            return Err(Error::domain("attention width inconsistent with the BiGRU stack"));
        }
        if w.dense_w.len() != w.attention.output_width() || w.dense_b.len() != 1 {
            return Err(Error::domain("dense head width inconsistent"));
        }
        Ok(())
    }

    fn check_sequence(&self, seq: &[usize]) -> Result<()> {
        if seq.len() != self.max_tokens {
            return Err(Error::domain(format!("sequence length {} != max_tokens {}", seq.len(), self.max_tokens)));
        }
        if let Some(&bad) = seq.iter().find(|&&t| t >= self.embedding.size()) {
            return Err(Error::domain(format!("token index {bad} outside the embedding table")));
        }
        Ok(())
    }

    fn forward_cached(&self, seq: &[usize]) -> Result<ForwardCache> {
        self.check_sequence(seq)?;
        let mut x: Vec<Vec<f64>> = seq.iter().map(|&t| self.embedding.row(t).to_vec()).collect();
        let mut inputs = Vec::with_capacity(self.weights.layers.len());
        let mut caches = Vec::with_capacity(self.weights.layers.len());
        for layer in &self.weights.layers {
            let (out, cache) = bigru_forward_cached(layer, &x);
            inputs.push(std::mem::replace(&mut x, out));
            caches.push(cache);
        }
        let top = Matrix::from_rows(&x);
        let mask: Vec<bool> = seq.iter().map(|&t| t != PAD).collect();
        let (y, attention) = attention_forward_cached(&self.weights.attention, &top, &mask)?;
        let n_real = mask.iter().filter(|&&m| m).count() as f64;
        let mut pooled = vec![0.0; y.cols];
        for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            for (p, v) in pooled.iter_mut().zip(y.row(i)) {
                *p += v / n_real;
            }
        }
        let logit = dot(&self.weights.dense_w, &pooled) + self.weights.dense_b[0];
        Ok(ForwardCache { inputs, layers: caches, top, attention, mask, pooled, prob: sigmoid(logit) })
    }

    /// Probability of an up move for one pre-padded sequence.
    pub fn forward_one(&self, seq: &[usize]) -> Result<f64> {
        Ok(self.forward_cached(seq)?.prob)
    }

    /// Item order of the output matches the batch; items may run in parallel.
    pub fn model_forward(&self, batch: &[TokenSequence]) -> Result<Vec<f64>> {
        batch.par_iter().map(|seq| self.forward_one(seq)).collect()
    }

    fn item_gradients(&self, seq: &[usize], label: u8, scale: f64) -> Result<(f64, f64, Gradients)> {
        let c = self.forward_cached(seq)?;
        let w = &self.weights;
        let mut g = w.zeros_like();
        // Gradient of the BCE through the logit: σ(logit) - y.
        let d_logit = (c.prob - label as f64) * scale;
        for (gw, p) in g.dense_w.iter_mut().zip(&c.pooled) {
            *gw += d_logit * p;
        }
        g.dense_b[0] += d_logit;
        let n_real = c.mask.iter().filter(|&&m| m).count() as f64;
        let t_len = seq.len();
        let d_out = w.attention.output_width();
        let mut d_y = Matrix::zeros(t_len, d_out);
        for (i, &m) in c.mask.iter().enumerate() {
            if m {
                for (dst, wv) in d_y.row_mut(i).iter_mut().zip(&w.dense_w) {
                    *dst = d_logit * wv / n_real;
                }
            }
        }
        let d_top = attention_backward(&w.attention, &c.top, &c.attention, &d_y, &mut g.attention);
        let mut d_seq: Vec<Vec<f64>> = (0..t_len).map(|i| d_top.row(i).to_vec()).collect();
        for k in (0..w.layers.len()).rev() {
            d_seq = bigru_backward(&w.layers[k], &c.inputs[k], &c.layers[k], &d_seq, &mut g.layers[k]);
        }
        let embedding = if self.config.train_embeddings {
            let dim = self.embedding.dim;
            let mut e = vec![0.0; self.embedding.data.len()];
            for (&tok, dx) in seq.iter().zip(&d_seq) {
                if tok != PAD {
                    for (a, b) in e[tok * dim..(tok + 1) * dim].iter_mut().zip(dx) {
                        *a += b;
                    }
                }
            }
            Some(e)
        } else {
            None
        };
        let y = label as f64;
        let p = c.prob.clamp(BCE_EPS, 1.0 - BCE_EPS);
        let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        Ok((loss, c.prob, Gradients { weights: g, embedding }))
    }

    /// Mean BCE over the batch and its exact gradient w.r.t. every trainable
    /// parameter. Per-item gradients are summed in batch order.
    pub fn backward(&self, batch: &[TokenSequence], labels: &[u8]) -> Result<(f64, Gradients)> {
        let (loss, _, g) = self.backward_with_probs(batch, labels)?;
        Ok((loss, g))
    }

    /// As [`SentimentModel::backward`], also returning the forward probabilities.
    pub fn backward_with_probs(&self, batch: &[TokenSequence], labels: &[u8]) -> Result<(f64, Vec<f64>, Gradients)> {
        if batch.len() != labels.len() || batch.is_empty() {
            return Err(Error::domain("batch and labels must be aligned and non-empty"));
        }
        let scale = 1.0 / batch.len() as f64;
        let items: Vec<(f64, f64, Gradients)> = batch
            .par_iter()
            .zip(labels.par_iter())
            .map(|(s, &y)| self.item_gradients(s, y, scale))
            .collect::<Result<_>>()?;
        let mut iter = items.into_iter();
        let (mut loss, p0, mut total) = iter.next().expect("non-empty batch");
        let mut probs = vec![p0];
        for (l, p, g) in iter {
            loss += l;
            probs.push(p);
            total.weights.add_assign(&g.weights);
            if let (Some(acc), Some(e)) = (total.embedding.as_mut(), g.embedding) {
                acc.iter_mut().zip(e).for_each(|(a, b)| *a += b);
            }
        }
        Ok((loss * scale, probs, total))
    }
}

/// Mean binary cross-entropy with probabilities clipped to `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::domain(format!("{} probabilities vs {} labels", probs.len(), labels.len())));
    }
    if probs.is_empty() {
        return Err(Error::domain("BCE of an empty batch"));
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            let y = y as f64;
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / probs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::synthetic_embeddings;

    fn tiny(train_embeddings: bool) -> SentimentModel {
        let toks: Vec<String> = (0..18).map(|i| format!("t{i}")).collect();
        let emb = synthetic_embeddings(&toks, 5, 3);
        let cfg = SentimentConfig { hidden: vec![8, 4], heads: 2, attention_out: None, train_embeddings };
        SentimentModel::new(cfg, emb, 6, 11).unwrap()
    }

    #[test]
    fn bce_examples() {
        assert!((bce_loss(&[0.5], &[1]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(&[1.0], &[1]).unwrap() <= 1.1e-12);
        assert!((bce_loss(&[0.9, 0.1], &[1, 0]).unwrap() - 0.105_360_515_657_826_3).abs() < 1e-12);
        assert!(bce_loss(&[0.5], &[1, 0]).is_err());
        assert!(bce_loss(&[0.0], &[1]).unwrap().is_finite());
    }

    #[test]
    fn zero_head_gives_half() {
        let mut m = tiny(false);
        m.weights.dense_w.iter_mut().for_each(|w| *w = 0.0);
        let batch = vec![vec![0, 0, 3, 4, 5, 6], vec![2, 3, 4, 5, 6, 7], vec![0, 0, 0, 0, 0, 1]];
        let probs = m.model_forward(&batch).unwrap();
        assert_eq!(probs, vec![0.5; 3]);
    }

    #[test]
    fn batch_shape_and_determinism() {
        let m = tiny(false);
        let batch = vec![vec![0, 0, 3, 4, 5, 6], vec![0, 0, 3, 4, 5, 6], vec![9, 9, 9, 1, 2, 3]];
        let probs = m.model_forward(&batch).unwrap();
        assert_eq!(probs.len(), 3);
        assert_eq!(probs[0], probs[1]);
        assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
        assert!(m.model_forward(&[vec![1, 2, 3]]).is_err());
        assert!(m.model_forward(&[vec![0; 6]]).is_err());
        assert!(m.model_forward(&[vec![99; 6]]).is_err());
        m.validate().unwrap();
    }

    #[test]
    fn balanced_identical_inputs_cancel_bias_gradient() {
        let mut m = tiny(false);
        m.weights.dense_w.iter_mut().for_each(|w| *w = 0.0);
        let seq = vec![0, 2, 3, 4, 5, 6];
        let (_, g) = m.backward(&[seq.clone(), seq], &[1, 0]).unwrap();
        assert_eq!(g.weights.dense_b[0], 0.0);
    }

    #[test]
    fn unused_embedding_rows_get_no_gradient() {
        let m = tiny(true);
        let batch = vec![vec![0, 0, 2, 3, 4, 5], vec![0, 6, 7, 8, 1, 2]];
        let (_, g) = m.backward(&batch, &[1, 0]).unwrap();
        let e = g.embedding.unwrap();
        let dim = m.embedding.dim;
        let used = [1, 2, 3, 4, 5, 6, 7, 8];
        for tok in 0..m.embedding.size() {
            let row = &e[tok * dim..(tok + 1) * dim];
            if used.contains(&tok) {
                assert!(row.iter().any(|&x| x != 0.0));
            } else {
                assert!(row.iter().all(|&x| x == 0.0), "row {tok}");
            }
        }
    }

    #[test]
    fn flat_round_trip() {
        let m = tiny(false);
        let flat = m.weights.to_flat();
        assert_eq!(flat.len(), m.weights.n_params());
        let mut w = m.weights.zeros_like();
        w.set_flat(&flat);
        assert_eq!(w, m.weights);
    }

    #[test]
    fn full_preset_builds() {
        let toks: Vec<String> = (0..4).map(|i| format!("t{i}")).collect();
        let emb = synthetic_embeddings(&toks, 8, 1);
        let m = SentimentModel::new(SentimentConfig::preset(Preset::Full), emb, 4, 1).unwrap();
        m.validate().unwrap();
        assert_eq!(m.weights.layers.len(), 7);
        assert_eq!(m.weights.attention.input_width(), 8);
        let p = m.forward_one(&[0, 2, 3, 4]).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }
}
