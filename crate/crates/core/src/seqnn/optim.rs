//! Adam over a flat parameter vector, with optional global-norm clipping.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradients are rescaled so their global L2 norm is at most this.
    pub clip_norm: Option<f64>,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: Some(5.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamMoments {
    pub fn zeros(n: usize) -> Self {
        AdamMoments { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }
}

pub fn global_norm(grads: &[f64]) -> f64 {
    grads.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales `grads` in place when their norm exceeds `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let c = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= c);
    }
    norm
}

/// One bias-corrected Adam update. `grads` may be clipped in place.
pub fn adam_step(params: &mut [f64], grads: &mut [f64], moments: &mut AdamMoments, hyper: &AdamHyper) {
    assert_eq!(params.len(), grads.len(), "params/grads length mismatch");
    assert_eq!(params.len(), moments.m.len(), "params/moments length mismatch");
    if let Some(bound) = hyper.clip_norm {
        clip_global_norm(grads, bound);
    }
    moments.step += 1;
    let t = moments.step as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        moments.m[i] = hyper.beta1 * moments.m[i] + (1.0 - hyper.beta1) * g;
        moments.v[i] = hyper.beta2 * moments.v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = moments.m[i] / c1;
        let v_hat = moments.v[i] / c2;
        params[i] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params() {
        let mut p = vec![0.3, -1.0, 2.5];
        let mut m = AdamMoments::zeros(3);
        adam_step(&mut p, &mut [0.0; 3], &mut m, &AdamHyper::default());
        assert_eq!(p, vec![0.3, -1.0, 2.5]);
    }

    #[test]
    fn first_step_is_signed_lr() {
        let h = AdamHyper { clip_norm: None, ..AdamHyper::default() };
        let g = [0.5, -2.0, 1e-3];
        let mut p = vec![0.0; 3];
        let mut m = AdamMoments::zeros(3);
        adam_step(&mut p, &mut g.to_vec(), &mut m, &h);
        // m_hat = g, v_hat = g^2, so step = lr * |g| / (|g| + eps).
        for (pi, gi) in p.iter().zip(g) {
            let expect = -h.learning_rate * gi.signum() * gi.abs() / (gi.abs() + h.eps);
            assert!((pi - expect).abs() < 1e-15, "{pi} vs {expect}");
        }
    }

    #[test]
    fn clipping_reaches_bound() {
        let mut g = vec![3.0, 4.0, 12.0];
        let before = clip_global_norm(&mut g, 2.5);
        assert_eq!(before, 13.0);
        assert!((global_norm(&g) - 2.5).abs() < 1e-12);
        let mut small = vec![0.1, 0.2];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.1, 0.2]);
    }
}
