//! Independent references for the sentiment network: a scalar-loop GRU cell
//! and central finite differences over every trainable parameter.

use super::{bce_loss, GruParams, SentimentModel};
use crate::error::Result;
use crate::text::TokenSequence;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// GRU cell evaluated one scalar at a time over `[h_prev, x]`.
pub fn scalar_gru_cell(p: &GruParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = h.len();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    for i in 0..n {
        let (mut ar, mut az) = (p.b_r[i], p.b_z[i]);
        for j in 0..n {
            ar += p.w_r.data[i * p.w_r.cols + j] * h[j];
            az += p.w_z.data[i * p.w_z.cols + j] * h[j];
        }
        for (j, xj) in x.iter().enumerate() {
            ar += p.w_r.data[i * p.w_r.cols + n + j] * xj;
            az += p.w_z.data[i * p.w_z.cols + n + j] * xj;
        }
        r[i] = sig(ar);
        z[i] = sig(az);
    }
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut a = p.b_h[i];
        for j in 0..n {
            a += p.w_h.data[i * p.w_h.cols + j] * r[j] * h[j];
        }
        for (j, xj) in x.iter().enumerate() {
            a += p.w_h.data[i * p.w_h.cols + n + j] * xj;
        }
        out[i] = (1.0 - z[i]) * h[i] + z[i] * a.tanh();
    }
    out
}

/// Relative error with the denominator floored at 1e-6: below that size a
/// central difference of step 1e-5 carries roundoff of order 1e-11.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Returns the max relative error over all weights (and embedding rows when
/// trainable).
pub fn finite_difference_check(model: &SentimentModel, batch: &[TokenSequence], labels: &[u8]) -> Result<f64> {
    let loss_of = |m: &SentimentModel| -> Result<f64> { bce_loss(&m.model_forward(batch)?, labels) };
    let (_, grads) = model.backward(batch, labels)?;
    let analytic = grads.weights.to_flat();
    let base = model.weights.to_flat();
    let mut worst: f64 = 0.0;
    let mut m = model.clone();
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + FD_STEP;
        m.weights.set_flat(&p);
        let up = loss_of(&m)?;
        p[i] = base[i] - FD_STEP;
        m.weights.set_flat(&p);
        let down = loss_of(&m)?;
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * FD_STEP)));
    }
    m.weights.set_flat(&base);
    if let Some(emb) = grads.embedding {
        let dim = m.embedding.dim;
        for i in dim..m.embedding.data.len() {
            let orig = m.embedding.data[i];
            m.embedding.data[i] = orig + FD_STEP;
            let up = loss_of(&m)?;
            m.embedding.data[i] = orig - FD_STEP;
            let down = loss_of(&m)?;
            m.embedding.data[i] = orig;
            worst = worst.max(rel_err(emb[i], (up - down) / (2.0 * FD_STEP)));
        }
    }
    Ok(worst)
}
