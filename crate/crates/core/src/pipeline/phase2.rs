//! Movement classification: feature assembly, splits, and the
//! model × optimizer search grid.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SplitUnit};
use super::data::Corpora;
use crate::dataset::{assemble_rows, split_grouped_indices, split_indices, Period, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{evaluate, ClassReport};
use crate::hpo::{bayes_opt, cv_error, grid_search, random_search, Assignment, CvConfig, OptimizerKind, SearchResult};
use crate::rng;
use crate::seqnn::SentimentPredictor;
use crate::tabular::{Estimator, FitConfig, ModelKind, Table};

/// Identity of a feature row: its period and the post it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowId {
    pub period: Period,
    pub post: usize,
}

#[derive(Debug, Clone)]
pub struct LabelledSet {
    pub table: Table,
    pub ids: Vec<RowId>,
}

#[derive(Debug, Clone)]
pub struct Phase2Data {
    pub train: LabelledSet,
    pub test1: LabelledSet,
    pub test2: LabelledSet,
    /// Posts dropped because no trading day could be resolved.
    pub skipped: usize,
}

/// Fails if any Test1 or Test2 row also appears in the training set.
pub fn check_disjoint(train: &[RowId], tests: &[&[RowId]]) -> Result<()> {
    let train: BTreeSet<_> = train.iter().collect();
    for t in tests {
        if let Some(id) = t.iter().find(|id| train.contains(id)) {
            return Err(Error::State(format!("row {:?} post {} is in both train and a test set", id.period, id.post)));
        }
    }
    Ok(())
}

/// Scores both market periods, assembles rows, splits the pre-shift rows into
/// train and Test1 and keeps every shifted row for Test2.
pub fn prepare_phase2(cfg: &ExperimentConfig, predictor: &SentimentPredictor, corpora: &Corpora) -> Result<Phase2Data> {
    let mut skipped = 0;
    let mut assemble = |period: Period| -> Result<_> {
        let data = if period == Period::Before { &corpora.before } else { &corpora.during };
        let texts: Vec<String> = data.posts.iter().map(|p| p.text.clone()).collect();
        let scores = predictor.score(&texts)?;
        let a = assemble_rows(&data.posts, &scores, &data.bars)?;
        skipped += a.skipped;
        let ids: Vec<RowId> = a.source.iter().map(|&post| RowId { period, post }).collect();
        Ok((a, ids))
    };
    let (before, before_ids) = assemble(Period::Before)?;
    let (during, during_ids) = assemble(Period::During)?;
    if before.rows.is_empty() || during.rows.is_empty() {
        return Err(Error::domain("both market periods need at least one labelled row"));
    }
    let spec = SplitSpec::holdout(cfg.phase2.train_fraction, rng::sub_seed(cfg.seed, "phase2.split"));
    let (train_idx, test_idx) = match cfg.phase2.split_unit {
        SplitUnit::Row => split_indices(before.rows.len(), &spec)?,
        SplitUnit::Day => split_grouped_indices(&before.days, &spec)?,
    };
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::domain("pre-shift split left an empty train or Test1 set"));
    }
    let all = Table::from_feature_rows(&before.rows);
    let set = |idx: &[usize]| LabelledSet { table: all.subset(idx), ids: idx.iter().map(|&i| before_ids[i]).collect() };
    let data = Phase2Data {
        train: set(&train_idx),
        test1: set(&test_idx),
        test2: LabelledSet { table: Table::from_feature_rows(&during.rows), ids: during_ids },
        skipped,
    };
    check_disjoint(&data.train.ids, &[&data.test1.ids, &data.test2.ids])?;
    log::info!(
        "phase 2: {} train, {} Test1, {} Test2 rows",
        data.train.table.len(),
        data.test1.table.len(),
        data.test2.table.len()
    );
    Ok(data)
}

/// Deterministic part of one cell's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub model: ModelKind,
    pub optimizer: OptimizerKind,
    pub n_trials: usize,
    pub best_params: Assignment,
    pub best_cv_error: f64,
    pub test1: ClassReport,
    pub test2: ClassReport,
    #[serde(skip)]
    pub hpo_wall_time_s: f64,
    #[serde(skip)]
    pub refit_wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub report: CellReport,
    pub search: SearchResult,
    pub estimator: Estimator,
}

/// Fits `cfg` on the full training set and evaluates both test sets.
pub fn fit_and_evaluate(data: &Phase2Data, cfg: FitConfig) -> Result<(Estimator, ClassReport, ClassReport)> {
    let mut est = Estimator::new(cfg);
    est.fit(&data.train.table)?;
    let (r1, r2) = evaluate_estimator(&est, data)?;
    Ok((est, r1, r2))
}

pub fn evaluate_estimator(est: &Estimator, data: &Phase2Data) -> Result<(ClassReport, ClassReport)> {
    let eval = |s: &LabelledSet| evaluate(&est.predict(&s.table)?, s.table.labels());
    Ok((eval(&data.test1)?, eval(&data.test2)?))
}

fn fit_seed(master: u64, kind: ModelKind) -> u64 {
    rng::sub_seed(master, &format!("phase2.fit.{kind}"))
}

/// HPO with k-fold CV on the training rows, refit of the best point on all of
/// them, evaluation on Test1 and Test2.
pub fn run_cell(cfg: &ExperimentConfig, data: &Phase2Data, kind: ModelKind, opt: OptimizerKind) -> Result<CellResult> {
    let p = &cfg.phase2;
    let space = p.space(kind);
    let cv = CvConfig { k: p.cv_folds, seed: rng::sub_seed(cfg.seed, "phase2.cv") };
    let seed = fit_seed(cfg.seed, kind);
    let train = &data.train.table;
    let objective = |a: &Assignment| cv_error(train, &cv, &p.fit_config(kind, a, seed)?);
    let search_seed = rng::sub_seed(cfg.seed, &format!("phase2.hpo.{kind}.{opt}"));
    let start = Instant::now();
    let search = match opt {
        OptimizerKind::Grid => grid_search(&space, objective)?,
        OptimizerKind::Random => random_search(&space, objective, p.random_trials, search_seed, space.is_discrete())?,
        OptimizerKind::Bayes => bayes_opt(&space, objective, &p.bayes, search_seed)?,
    };
    let hpo_wall_time_s = start.elapsed().as_secs_f64();
    let best = search.best_trial().clone();
    let start = Instant::now();
    let (estimator, test1, test2) = fit_and_evaluate(data, p.fit_config(kind, &best.params, seed)?)?;
    let refit_wall_time_s = start.elapsed().as_secs_f64();
    log::info!(
        "{kind}/{opt}: cv error {:.4}, Test1 {:.3}, Test2 {:.3}",
        best.objective,
        test1.accuracy,
        test2.accuracy
    );
    let report = CellReport {
        model: kind,
        optimizer: opt,
        n_trials: search.trials.len(),
        best_params: best.params,
        best_cv_error: best.objective,
        test1,
        test2,
        hpo_wall_time_s,
        refit_wall_time_s,
    };
    Ok(CellResult { report, search, estimator })
}

/// Every configured cell, in table order. Cells run in parallel; each is a
/// pure function of the config and data.
pub fn run_phase2(cfg: &ExperimentConfig, data: &Phase2Data) -> Result<Vec<CellResult>> {
    cfg.phase2.cells().par_iter().map(|&(m, o)| run_cell(cfg, data, m, o)).collect()
}

/// Fits one kind with its fixed (or default) hyperparameters, no search.
pub fn run_fixed(
    cfg: &ExperimentConfig,
    data: &Phase2Data,
    kind: ModelKind,
) -> Result<(Estimator, ClassReport, ClassReport)> {
    let fit = cfg.phase2.fit_config(kind, &Assignment::new(), fit_seed(cfg.seed, kind))?;
    fit_and_evaluate(data, fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_is_a_state_error() {
        let a = RowId { period: Period::Before, post: 3 };
        let b = RowId { period: Period::Before, post: 4 };
        let c = RowId { period: Period::During, post: 3 };
        check_disjoint(&[a], &[&[b], &[c]]).unwrap();
        assert!(matches!(check_disjoint(&[a, b], &[&[c], &[b]]), Err(Error::State(_))));
    }
}
