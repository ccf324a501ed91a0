//! Seeded k-fold cross-validation.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tabular::{fit, FitConfig, Table};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { k: 5, seed: 0 }
    }
}

/// Fold of every row: rows are shuffled, then position `i` goes to fold
/// `i mod k`, so fold sizes differ by at most one.
pub fn fold_assignment(n: usize, cv: &CvConfig) -> Result<Vec<usize>> {
    if cv.k < 2 {
        return Err(Error::config("cross-validation needs k >= 2"));
    }
    if cv.k > n {
        return Err(Error::domain(format!("k = {} exceeds the {n} available rows", cv.k)));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(cv.seed, "cv.folds"));
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % cv.k;
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub fold_errors: Vec<f64>,
    pub mean_error: f64,
}

/// Runs `eval(train_idx, test_idx) -> error` for every fold (folds may run in
/// parallel; results keep fold order).
pub fn k_fold_cv<E>(n: usize, cv: &CvConfig, eval: E) -> Result<CvOutcome>
where
    E: Fn(&[usize], &[usize]) -> Result<f64> + Sync,
{
    let fold = fold_assignment(n, cv)?;
    let fold_errors: Vec<f64> = (0..cv.k)
        .into_par_iter()
        .map(|j| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold[i] == j);
            eval(&train, &test)
        })
        .collect::<Result<_>>()?;
    let mean_error = fold_errors.iter().sum::<f64>() / cv.k as f64;
    Ok(CvOutcome { fold_errors, mean_error })
}

/// Misclassification rate of `preds` against `labels`.
pub fn error_rate(preds: &[u8], labels: &[u8]) -> f64 {
    let wrong = preds.iter().zip(labels).filter(|(a, b)| a != b).count();
    wrong as f64 / labels.len().max(1) as f64
}

/// Mean fold error of fitting `cfg` on a table.
pub fn cv_error(t: &Table, cv: &CvConfig, cfg: &FitConfig) -> Result<f64> {
    Ok(k_fold_cv(t.len(), cv, |train, test| {
        let model = fit(&t.subset(train), cfg)?;
        let preds: Vec<u8> = test.iter().map(|&i| (model.predict_one(t.row(i)) >= 0.5) as u8).collect();
        let labels: Vec<u8> = test.iter().map(|&i| t.label(i)).collect();
        Ok(error_rate(&preds, &labels))
    })?
    .mean_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_classifier_on_balanced_labels() {
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        for k in [2, 4, 5, 10] {
            let out = k_fold_cv(20, &CvConfig { k, seed: 3 }, |_, test| {
                let l: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
                Ok(error_rate(&vec![1; l.len()], &l))
            });
            // Every k here divides 20, so equal fold sizes make the mean of
            // fold errors the overall error of exactly half the rows.
            let o = out.unwrap();
            assert_eq!(o.fold_errors.len(), k);
            assert!((o.mean_error - 0.5).abs() < 1e-12);
        }
        let loo = k_fold_cv(4, &CvConfig { k: 4, seed: 0 }, |train, test| {
            assert_eq!((train.len(), test.len()), (3, 1));
            Ok(if test[0] % 2 == 0 { 1.0 } else { 0.0 })
        })
        .unwrap();
        assert_eq!(loo.mean_error, 0.5);
    }

    #[test]
    fn k_checks() {
        assert!(matches!(fold_assignment(3, &CvConfig { k: 4, seed: 0 }), Err(Error::Domain(_))));
        assert!(matches!(fold_assignment(3, &CvConfig { k: 1, seed: 0 }), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn folds_partition_rows(n in 2usize..300, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let f = fold_assignment(n, &CvConfig { k, seed }).unwrap();
            let mut sizes = vec![0usize; k];
            for &j in &f { sizes[j] += 1; }
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        }
    }
}
