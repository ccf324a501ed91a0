//! Gaussian-process surrogate with an RBF kernel, and expected improvement.
//!
//! `k(x, x') = s² exp(-|x - x'|² / (2 ℓ²))`, with `noise` added to the
//! diagonal of the training kernel matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyper {
    pub length_scale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

/// Candidates tried when fitting by marginal likelihood (outputs are assumed
/// standardised, so the signal variances sit around 1).
pub const LENGTH_SCALES: [f64; 6] = [0.05, 0.1, 0.2, 0.35, 0.6, 1.0];
pub const SIGNAL_VARS: [f64; 3] = [0.5, 1.0, 2.0];
pub const NOISE_VARS: [f64; 3] = [1e-6, 1e-4, 1e-2];

/// Diagonal jitter ladder used when the kernel matrix is not numerically PD.
const JITTERS: [f64; 7] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5];

pub fn rbf(a: &[f64], b: &[f64], h: &GpHyper) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    h.signal_var * (-d2 / (2.0 * h.length_scale * h.length_scale)).exp()
}

#[derive(Debug, Clone)]
pub struct GpSurrogate {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub hyper: GpHyper,
    /// Extra diagonal jitter that was needed for the factorization.
    pub jitter: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
}

impl GpSurrogate {
    /// Conditions the prior on `(x, y)`, escalating jitter until the kernel
    /// matrix factorizes.
    pub fn fit(x: Vec<Vec<f64>>, y: Vec<f64>, hyper: GpHyper) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::domain("GP inputs and outputs must align"));
        }
        if !(hyper.length_scale > 0.0 && hyper.signal_var > 0.0 && hyper.noise_var >= 0.0) {
            return Err(Error::domain("GP hyperparameters must be positive"));
        }
        let n = x.len();
        if n == 0 {
            return Ok(GpSurrogate { x, y, hyper, jitter: 0.0, chol: None, alpha: DVector::zeros(0) });
        }
        let k = DMatrix::from_fn(n, n, |i, j| rbf(&x[i], &x[j], &hyper));
        for jitter in JITTERS {
            let mut kj = k.clone();
            for i in 0..n {
                kj[(i, i)] += hyper.noise_var + jitter;
            }
            if let Some(chol) = Cholesky::new(kj) {
                let alpha = chol.solve(&DVector::from_column_slice(&y));
                if alpha.iter().all(|v| v.is_finite()) {
                    return Ok(GpSurrogate { x, y, hyper, jitter, chol: Some(chol), alpha });
                }
            }
        }
        Err(Error::Numerical("GP kernel matrix not positive definite after maximum jitter".into()))
    }

    /// Grid search over [`LENGTH_SCALES`] × [`SIGNAL_VARS`] × [`NOISE_VARS`] for
    /// the largest log marginal likelihood; ties keep the first candidate.
    pub fn fit_marginal_likelihood(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let mut best: Option<(f64, GpSurrogate)> = None;
        let mut last_err = None;
        for &length_scale in &LENGTH_SCALES {
            for &signal_var in &SIGNAL_VARS {
                for &noise_var in &NOISE_VARS {
                    let h = GpHyper { length_scale, signal_var, noise_var };
                    match GpSurrogate::fit(x.clone(), y.clone(), h) {
                        Ok(g) => {
                            let lml = g.log_marginal_likelihood();
                            if lml.is_finite() && best.as_ref().is_none_or(|(b, _)| lml > *b) {
                                best = Some((lml, g));
                            }
                        }
                        Err(e) => last_err = Some(e),
                    }
                }
            }
        }
        best.map(|b| b.1)
            .ok_or_else(|| last_err.unwrap_or_else(|| Error::Numerical("no GP hyperparameter candidate fitted".into())))
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let Some(chol) = &self.chol else { return 0.0 };
        let n = self.y.len() as f64;
        let fit: f64 = self.y.iter().zip(self.alpha.iter()).map(|(a, b)| a * b).sum();
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        -0.5 * fit - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    /// Posterior mean and variance at `x` (variance clamped at zero).
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let Some(chol) = &self.chol else { return (0.0, self.hyper.signal_var) };
        let ks = DVector::from_iterator(self.x.len(), self.x.iter().map(|xi| rbf(xi, x, &self.hyper)));
        let mean = ks.dot(&self.alpha);
        let mut v = ks.clone();
        chol.l_dirty().solve_lower_triangular_mut(&mut v);
        let var = self.hyper.signal_var - v.norm_squared();
        (mean, var.max(0.0))
    }
}

pub fn gp_posterior(g: &GpSurrogate, x: &[f64]) -> (f64, f64) {
    g.posterior(x)
}

/// Expected improvement below `best` for a Gaussian with mean `mu` and
/// standard deviation `sigma`.
pub fn ei_gaussian(mu: f64, sigma: f64, best: f64) -> f64 {
    if !(sigma > 0.0) {
        return (best - mu).max(0.0);
    }
    let u = (best - mu) / sigma;
    let n = Normal::standard();
    ((best - mu) * n.cdf(u) + sigma * n.pdf(u)).max(0.0)
}

pub fn expected_improvement(g: &GpSurrogate, x: &[f64], best: f64) -> f64 {
    let (mu, var) = g.posterior(x);
    ei_gaussian(mu, var.sqrt(), best)
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: GpHyper = GpHyper { length_scale: 0.3, signal_var: 1.5, noise_var: 1e-10 };

    #[test]
    fn prior_without_observations() {
        let g = GpSurrogate::fit(vec![], vec![], H).unwrap();
        assert_eq!(g.posterior(&[0.4]), (0.0, 1.5));
    }

    #[test]
    fn interpolates_observed_points() {
        let x = vec![vec![0.1], vec![0.5], vec![0.9]];
        let g = GpSurrogate::fit(x.clone(), vec![1.0, -2.0, 0.5], H).unwrap();
        for (xi, yi) in x.iter().zip([1.0, -2.0, 0.5]) {
            let (m, v) = g.posterior(xi);
            assert!((m - yi).abs() < 1e-6);
            assert!(v <= H.noise_var + 1e-8);
        }
    }

    #[test]
    fn jitter_rescues_duplicates() {
        let h = GpHyper { noise_var: 0.0, ..H };
        let g = GpSurrogate::fit(vec![vec![0.5], vec![0.5]], vec![1.0, 1.0], h).unwrap();
        assert!(g.jitter > 0.0);
    }

    #[test]
    fn ei_closed_form() {
        assert_eq!(ei_gaussian(1.0, 0.0, 1.0), 0.0);
        assert_eq!(ei_gaussian(2.0, 0.0, 1.0), 0.0);
        assert_eq!(ei_gaussian(0.0, 0.0, 1.0), 1.0);
        assert!((ei_gaussian(0.0, 1.0, 0.0) - 0.398_942_280_401_432_7).abs() < 1e-12);
    }
}
