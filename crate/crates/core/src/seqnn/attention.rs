//! Multi-head multiplicative (bilinear) self-attention.
//!
//! Head `k` scores `s_ij = H_i W_k H_j^T`; padded key positions get `-inf`
//! before the row softmax, head output is `A_k H`, and the concatenated heads
//! are projected by `W_o`.

use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    /// One `d x d` bilinear score matrix per head.
    pub heads: Vec<Matrix>,
    /// `(n_heads * d) x d_out` output projection.
    pub w_o: Matrix,
}

impl AttentionParams {
    pub fn glorot(n_heads: usize, d: usize, d_out: usize, rng: &mut Rng) -> Self {
        let heads = (0..n_heads).map(|_| Matrix::glorot(d, d, rng)).collect();
        AttentionParams { heads, w_o: Matrix::glorot(n_heads * d, d_out, rng) }
    }

    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn input_width(&self) -> usize {
        self.heads.first().map_or(0, |h| h.rows)
    }

    pub fn output_width(&self) -> usize {
        self.w_o.cols
    }

    pub fn zeros_like(&self) -> Self {
        AttentionParams { heads: self.heads.iter().map(Matrix::zeros_like).collect(), w_o: self.w_o.zeros_like() }
    }

    fn check(&self) -> Result<()> {
        let d = self.input_width();
        if self.heads.is_empty()
            || self.heads.iter().any(|h| h.rows != d || h.cols != d)
            || self.w_o.rows != self.n_heads() * d
        {
            return Err(Error::domain("inconsistent attention parameter shapes"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    /// `H W_k` per head.
    hw: Vec<Matrix>,
    /// Row-stochastic weights per head.
    pub(crate) weights: Vec<Matrix>,
    concat: Matrix,
}

fn softmax_masked(scores: &mut [f64], mask: &[bool]) {
    let max = scores.iter().zip(mask).filter(|(_, &m)| m).map(|(s, _)| *s).fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (s, &m) in scores.iter_mut().zip(mask) {
        *s = if m { (*s - max).exp() } else { 0.0 };
        sum += *s;
    }
    scores.iter_mut().for_each(|s| *s /= sum);
}

/// `mask[j]` is true for real (unmasked) positions.
pub fn attention_forward(a: &AttentionParams, h: &Matrix, mask: &[bool]) -> Result<Matrix> {
    Ok(attention_forward_cached(a, h, mask)?.0)
}

/// Attention weight matrix of every head.
pub fn attention_weights(a: &AttentionParams, h: &Matrix, mask: &[bool]) -> Result<Vec<Matrix>> {
    Ok(attention_forward_cached(a, h, mask)?.1.weights)
}

pub(crate) fn attention_forward_cached(
    a: &AttentionParams,
    h: &Matrix,
    mask: &[bool],
) -> Result<(Matrix, AttentionCache)> {
    a.check()?;
    let (t_len, d) = (h.rows, h.cols);
    if t_len == 0 || mask.len() != t_len {
        return Err(Error::domain("attention input empty or mask misaligned"));
    }
    if d != a.input_width() {
        return Err(Error::domain(format!("attention expects width {}, got {d}", a.input_width())));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::domain("every attention key is masked"));
    }
    let k = a.n_heads();
    let mut concat = Matrix::zeros(t_len, k * d);
    let mut hw_all = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for (head, w) in a.heads.iter().enumerate() {
        let hw = h.matmul(w);
        let mut scores = hw.matmul_t(h);
        for i in 0..t_len {
            softmax_masked(scores.row_mut(i), mask);
        }
        let out = scores.matmul(h);
        for i in 0..t_len {
            concat.row_mut(i)[head * d..(head + 1) * d].copy_from_slice(out.row(i));
        }
        hw_all.push(hw);
        weights.push(scores);
    }
    let y = concat.matmul(&a.w_o);
    Ok((y, AttentionCache { hw: hw_all, weights, concat }))
}

/// Returns the gradient w.r.t. `h`; parameter gradients go into `grads`.
pub(crate) fn attention_backward(
    a: &AttentionParams,
    h: &Matrix,
    cache: &AttentionCache,
    d_y: &Matrix,
    grads: &mut AttentionParams,
) -> Matrix {
    let (t_len, d) = (h.rows, h.cols);
    grads.w_o.add_assign(&cache.concat.t_matmul(d_y));
    let d_concat = d_y.matmul_t(&a.w_o);
    let mut d_h = Matrix::zeros(t_len, d);
    for (head, w) in a.heads.iter().enumerate() {
        let weights = &cache.weights[head];
        let mut d_out = Matrix::zeros(t_len, d);
        for i in 0..t_len {
            d_out.row_mut(i).copy_from_slice(&d_concat.row(i)[head * d..(head + 1) * d]);
        }
        // out = A H
        d_h.add_assign(&weights.t_matmul(&d_out));
        let d_a = d_out.matmul_t(h);
        let mut d_s = Matrix::zeros(t_len, t_len);
        for i in 0..t_len {
            let (ar, dar) = (weights.row(i), d_a.row(i));
            let inner: f64 = ar.iter().zip(dar).map(|(x, y)| x * y).sum();
            for (j, v) in d_s.row_mut(i).iter_mut().enumerate() {
                *v = ar[j] * (dar[j] - inner);
            }
        }
        // S = H W H^T
        let hw = &cache.hw[head];
        let hwt = h.matmul_t(w);
        d_h.add_assign(&d_s.matmul(&hwt));
        d_h.add_assign(&d_s.t_matmul(hw));
        grads.heads[head].add_assign(&h.t_matmul(&d_s.matmul(h)));
    }
    d_h
}
