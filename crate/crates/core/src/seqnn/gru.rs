//! GRU cell and bidirectional layer, forward and backward through time.
//!
//! ```text
//! r  = σ(W_r [h_prev, x] + b_r)
//! z  = σ(W_z [h_prev, x] + b_z)
//! h~ = tanh(W_h [r * h_prev, x] + b_h)
//! h  = (1 - z) * h_prev + z * h~
//! ```

use serde::{Deserialize, Serialize};

use super::linalg::{affine_concat, affine_concat_backward, sigmoid, Matrix};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub w_r: Matrix,
    pub w_z: Matrix,
    pub w_h: Matrix,
    pub b_r: Vec<f64>,
    pub b_z: Vec<f64>,
    pub b_h: Vec<f64>,
}

impl GruParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let w = Matrix::zeros(hidden, hidden + input);
        GruParams {
            w_r: w.clone(),
            w_z: w.clone(),
            w_h: w,
            b_r: vec![0.0; hidden],
            b_z: vec![0.0; hidden],
            b_h: vec![0.0; hidden],
        }
    }

    pub fn glorot(hidden: usize, input: usize, rng: &mut Rng) -> Self {
        GruParams {
            w_r: Matrix::glorot(hidden, hidden + input, rng),
            w_z: Matrix::glorot(hidden, hidden + input, rng),
            w_h: Matrix::glorot(hidden, hidden + input, rng),
            b_r: vec![0.0; hidden],
            b_z: vec![0.0; hidden],
            b_h: vec![0.0; hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_r.len()
    }

    pub fn input(&self) -> usize {
        self.w_r.cols - self.hidden()
    }

    pub fn zeros_like(&self) -> Self {
        GruParams::zeros(self.hidden(), self.input())
    }

    pub(crate) fn tensors(&self) -> [(&'static str, Vec<usize>, &[f64]); 6] {
        let m = |w: &Matrix| vec![w.rows, w.cols];
        [
            ("w_r", m(&self.w_r), &self.w_r.data),
            ("w_z", m(&self.w_z), &self.w_z.data),
            ("w_h", m(&self.w_h), &self.w_h.data),
            ("b_r", vec![self.b_r.len()], &self.b_r),
            ("b_z", vec![self.b_z.len()], &self.b_z),
            ("b_h", vec![self.b_h.len()], &self.b_h),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [&mut self.w_r.data, &mut self.w_z.data, &mut self.w_h.data, &mut self.b_r, &mut self.b_z, &mut self.b_h]
    }

    fn check(&self) -> Result<()> {
        let h = self.hidden();
        let cols = self.w_r.cols;
        let ok = [&self.w_r, &self.w_z, &self.w_h].iter().all(|w| w.rows == h && w.cols == cols)
            && self.b_z.len() == h
            && self.b_h.len() == h
            && cols >= h;
        if ok {
            Ok(())
        } else {
            Err(Error::domain("inconsistent GRU parameter shapes"))
        }
    }
}

/// One step's hidden state plus the gate activations the backward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct GruState {
    pub h: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub h_tilde: Vec<f64>,
}

pub fn gru_cell_forward(p: &GruParams, x: &[f64], h_prev: &[f64]) -> Result<GruState> {
    p.check()?;
    if h_prev.len() != p.hidden() || x.len() != p.input() {
        return Err(Error::domain(format!(
            "GRU cell expects hidden {} / input {}, got {} / {}",
            p.hidden(),
            p.input(),
            h_prev.len(),
            x.len()
        )));
    }
    Ok(cell_forward(p, x, h_prev))
}

fn cell_forward(p: &GruParams, x: &[f64], h_prev: &[f64]) -> GruState {
    let r: Vec<f64> = affine_concat(&p.w_r, h_prev, x, &p.b_r).into_iter().map(sigmoid).collect();
    let z: Vec<f64> = affine_concat(&p.w_z, h_prev, x, &p.b_z).into_iter().map(sigmoid).collect();
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let h_tilde: Vec<f64> = affine_concat(&p.w_h, &rh, x, &p.b_h).into_iter().map(f64::tanh).collect();
    let h = (0..h_prev.len()).map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * h_tilde[i]).collect();
    GruState { h, r, z, h_tilde }
}

/// Backward through one cell. Accumulates parameter gradients into `grads`,
/// the input gradient into `dx`, and returns the gradient w.r.t. `h_prev`.
pub(crate) fn cell_backward(
    p: &GruParams,
    x: &[f64],
    h_prev: &[f64],
    s: &GruState,
    dh: &[f64],
    grads: &mut GruParams,
    dx: &mut [f64],
) -> Vec<f64> {
    let n = h_prev.len();
    let mut dh_prev: Vec<f64> = (0..n).map(|i| dh[i] * (1.0 - s.z[i])).collect();
    let d_pre_h: Vec<f64> = (0..n).map(|i| dh[i] * s.z[i] * (1.0 - s.h_tilde[i] * s.h_tilde[i])).collect();
    let d_pre_z: Vec<f64> = (0..n).map(|i| dh[i] * (s.h_tilde[i] - h_prev[i]) * s.z[i] * (1.0 - s.z[i])).collect();

    let rh: Vec<f64> = s.r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut d_rh = vec![0.0; n];
    affine_concat_backward(&p.w_h, &rh, x, &d_pre_h, &mut grads.w_h, &mut d_rh, dx);
    for i in 0..n {
        grads.b_h[i] += d_pre_h[i];
        grads.b_z[i] += d_pre_z[i];
        dh_prev[i] += d_rh[i] * s.r[i];
    }
    let d_pre_r: Vec<f64> = (0..n).map(|i| d_rh[i] * h_prev[i] * s.r[i] * (1.0 - s.r[i])).collect();
    for i in 0..n {
        grads.b_r[i] += d_pre_r[i];
    }
    affine_concat_backward(&p.w_z, h_prev, x, &d_pre_z, &mut grads.w_z, &mut dh_prev, dx);
    affine_concat_backward(&p.w_r, h_prev, x, &d_pre_r, &mut grads.w_r, &mut dh_prev, dx);
    dh_prev
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiGruLayer {
    pub forward: GruParams,
    pub backward: GruParams,
}

impl BiGruLayer {
    pub fn glorot(hidden: usize, input: usize, rng: &mut Rng) -> Self {
        let forward = GruParams::glorot(hidden, input, rng);
        let backward = GruParams::glorot(hidden, input, rng);
        BiGruLayer { forward, backward }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn input(&self) -> usize {
        self.forward.input()
    }

    pub fn output_width(&self) -> usize {
        2 * self.hidden()
    }

    pub fn zeros_like(&self) -> Self {
        BiGruLayer { forward: self.forward.zeros_like(), backward: self.backward.zeros_like() }
    }
}

/// Per-direction step states of one layer application.
#[derive(Debug, Clone)]
pub(crate) struct BiGruCache {
    fwd: Vec<GruState>,
    /// Indexed by time position, not processing order.
    bwd: Vec<GruState>,
}

pub fn bigru_layer_forward(layer: &BiGruLayer, seq: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if seq.is_empty() {
        return Err(Error::domain("BiGRU input sequence is empty"));
    }
    layer.forward.check()?;
    layer.backward.check()?;
    if layer.forward.hidden() != layer.backward.hidden() || layer.forward.input() != layer.backward.input() {
        return Err(Error::domain("BiGRU directions disagree on shape"));
    }
    if seq.iter().any(|x| x.len() != layer.input()) {
        return Err(Error::domain(format!("BiGRU expects input width {}", layer.input())));
    }
    Ok(bigru_forward_cached(layer, seq).0)
}

pub(crate) fn bigru_forward_cached(layer: &BiGruLayer, seq: &[Vec<f64>]) -> (Vec<Vec<f64>>, BiGruCache) {
    let hdim = layer.hidden();
    let t_len = seq.len();
    let zero = vec![0.0; hdim];
    let mut fwd: Vec<GruState> = Vec::with_capacity(t_len);
    for x in seq {
        let prev = fwd.last().map_or(&zero, |s| &s.h);
        let s = cell_forward(&layer.forward, x, prev);
        fwd.push(s);
    }
    let mut bwd_rev: Vec<GruState> = Vec::with_capacity(t_len);
    for x in seq.iter().rev() {
        let prev = bwd_rev.last().map_or(&zero, |s| &s.h);
        let s = cell_forward(&layer.backward, x, prev);
        bwd_rev.push(s);
    }
    bwd_rev.reverse();
    let out = fwd
        .iter()
        .zip(&bwd_rev)
        .map(|(f, b)| {
            let mut v = f.h.clone();
            v.extend_from_slice(&b.h);
            v
        })
        .collect();
    (out, BiGruCache { fwd, bwd: bwd_rev })
}

/// Backward through a layer; returns the gradient w.r.t. the input sequence.
pub(crate) fn bigru_backward(
    layer: &BiGruLayer,
    seq: &[Vec<f64>],
    cache: &BiGruCache,
    d_out: &[Vec<f64>],
    grads: &mut BiGruLayer,
) -> Vec<Vec<f64>> {
    let hdim = layer.hidden();
    let t_len = seq.len();
    let zero = vec![0.0; hdim];
    let mut dx = vec![vec![0.0; layer.input()]; t_len];

    let mut carry = vec![0.0; hdim];
    for t in (0..t_len).rev() {
        let dh: Vec<f64> = d_out[t][..hdim].iter().zip(&carry).map(|(a, b)| a + b).collect();
        let h_prev = if t == 0 { &zero } else { &cache.fwd[t - 1].h };
        carry = cell_backward(&layer.forward, &seq[t], h_prev, &cache.fwd[t], &dh, &mut grads.forward, &mut dx[t]);
    }

    let mut carry = vec![0.0; hdim];
    for t in 0..t_len {
        let dh: Vec<f64> = d_out[t][hdim..].iter().zip(&carry).map(|(a, b)| a + b).collect();
        let h_prev = if t + 1 == t_len { &zero } else { &cache.bwd[t + 1].h };
        carry = cell_backward(&layer.backward, &seq[t], h_prev, &cache.bwd[t], &dh, &mut grads.backward, &mut dx[t]);
    }
    dx
}
