//! Linear SVM: L2-regularised hinge loss solved in the dual by coordinate
//! descent over standardised features.
//!
//! The bias is handled by appending a constant 1 feature, so it is
//! regularised together with the weights. Dual variables satisfy
//! `0 <= α_i <= C`, and `w = Σ α_i y_i x_i` with `y ∈ {-1, +1}`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Table;
use crate::error::{Error, Result};
use crate::rng;
use crate::seqnn::linalg::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { c: 1.0, max_iter: 1000, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        let mut d = self.bias;
        for j in 0..self.weights.len() {
            d += self.weights[j] * (x[j] - self.mean[j]) / self.std[j];
        }
        d
    }

    /// Sigmoid of the decision value; thresholding at 0.5 equals the sign rule.
    pub fn predict_one(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }
}

/// A fitted model plus the dual solution, for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmFit {
    pub model: SvmModel,
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn fit_linear_svm(t: &Table, p: &SvmParams, seed: u64) -> Result<SvmFit> {
    if t.is_empty() || t.is_single_class() {
        return Err(Error::domain("linear SVM needs both classes present"));
    }
    if !(p.c > 0.0) || p.max_iter == 0 {
        return Err(Error::config("SVM needs C > 0 and max_iter >= 1"));
    }
    let (n, d) = (t.len(), t.n_features());
    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    for j in 0..d {
        mean[j] = (0..n).map(|i| t.value(i, j)).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (t.value(i, j) - mean[j]).powi(2)).sum::<f64>() / n as f64;
        std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    // Standardised rows with the constant bias feature last.
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut v: Vec<f64> = (0..d).map(|j| (t.value(i, j) - mean[j]) / std[j]).collect();
            v.push(1.0);
            v
        })
        .collect();
    let ys: Vec<f64> = (0..n).map(|i| if t.label(i) == 1 { 1.0 } else { -1.0 }).collect();
    let qd: Vec<f64> = xs.iter().map(|x| x.iter().map(|v| v * v).sum()).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng::stream(seed, "svm.order");
    let mut converged = false;
    let mut iterations = 0;
    while iterations < p.max_iter {
        iterations += 1;
        order.shuffle(&mut r);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let g = ys[i] * dot(&w, &xs[i]) - 1.0;
            let pg = projected_gradient(alpha[i], g, p.c);
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, p.c);
                let step = (alpha[i] - old) * ys[i];
                for (wj, xj) in w.iter_mut().zip(&xs[i]) {
                    *wj += step * xj;
                }
            }
        }
        if pg_max - pg_min < p.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("linear SVM stopped at the iteration cap ({})", p.max_iter);
    }
    let bias = w.pop().expect("bias feature");
    Ok(SvmFit { model: SvmModel { weights: w, bias, c: p.c, mean, std }, alpha, iterations, converged })
}

fn projected_gradient(alpha: f64, g: f64, c: f64) -> f64 {
    if alpha <= 0.0 {
        g.min(0.0)
    } else if alpha >= c {
        g.max(0.0)
    } else {
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dual gradient `y_i f(x_i) - 1` of every training row under the model.
pub fn dual_gradients(model: &SvmModel, t: &Table) -> Vec<f64> {
    (0..t.len())
        .map(|i| {
            let y = if t.label(i) == 1 { 1.0 } else { -1.0 };
            y * model.decision(t.row(i)) - 1.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_pair() {
        let t = Table::new(vec![vec![-1.0], vec![1.0]], vec![0, 1]).unwrap();
        let fit = fit_linear_svm(&t, &SvmParams { c: 1e3, ..SvmParams::default() }, 0).unwrap();
        assert!(fit.converged);
        assert!(fit.model.decision(&[0.0]).abs() < 1e-9);
        assert!(fit.model.decision(&[-1.0]) < 0.0 && fit.model.decision(&[1.0]) > 0.0);
    }

    #[test]
    fn single_class_rejected() {
        let t = Table::new(vec![vec![-1.0], vec![1.0]], vec![1, 1]).unwrap();
        assert!(matches!(fit_linear_svm(&t, &SvmParams::default(), 0), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_feature_is_harmless() {
        let t = Table::new(vec![vec![3.0, -2.0], vec![3.0, 2.0], vec![3.0, 1.0]], vec![0, 1, 1]).unwrap();
        let fit = fit_linear_svm(&t, &SvmParams::default(), 0).unwrap();
        assert!(fit.model.weights.iter().all(|w| w.is_finite()));
        assert_eq!(fit.model.std[0], 1.0);
    }
}
