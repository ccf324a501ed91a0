//! Grid, random and GP-based Bayesian search over a [`ParamSpace`].

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::gp::{expected_improvement, GpSurrogate};
use super::space::{Assignment, ParamSpace};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Grid,
    Random,
    Bayes,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [OptimizerKind::Grid, OptimizerKind::Random, OptimizerKind::Bayes];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Grid => "grid",
            OptimizerKind::Random => "random",
            OptimizerKind::Bayes => "bayes",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::config(format!("unknown optimizer {s:?} (expected grid, random or bayes)")))
    }
}

/// How a trial's point was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialSource {
    Grid,
    Random,
    /// Argmax of expected improvement.
    Acquisition,
    /// Random draw after a surrogate failure.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: Assignment,
    pub objective: f64,
    pub wall_time_s: f64,
    pub source: TrialSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub optimizer: OptimizerKind,
    pub trials: Vec<Trial>,
    /// Position in `trials` of the minimum objective (ties: lowest index).
    pub best: usize,
    pub total_wall_time_s: f64,
}

impl SearchResult {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best]
    }

    /// Best objective seen up to and including each trial.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut cur = f64::INFINITY;
        self.trials
            .iter()
            .map(|t| {
                cur = cur.min(t.objective);
                cur
            })
            .collect()
    }
}

struct Recorder<'a, F> {
    objective: &'a mut F,
    trials: Vec<Trial>,
    start: Instant,
}

impl<'a, F: FnMut(&Assignment) -> Result<f64>> Recorder<'a, F> {
    fn new(objective: &'a mut F) -> Self {
        Recorder { objective, trials: Vec::new(), start: Instant::now() }
    }

    fn eval(&mut self, params: Assignment, source: TrialSource) -> Result<f64> {
        let t0 = Instant::now();
        let objective = (self.objective)(&params)?;
        if !objective.is_finite() {
            return Err(Error::Numerical(format!("objective is not finite at {params:?}")));
        }
        let wall_time_s = t0.elapsed().as_secs_f64();
        self.trials.push(Trial { index: self.trials.len(), params, objective, wall_time_s, source });
        Ok(objective)
    }

    fn finish(self, optimizer: OptimizerKind) -> Result<SearchResult> {
        if self.trials.is_empty() {
            return Err(Error::domain("search produced no trials"));
        }
        let best = self
            .trials
            .iter()
            .enumerate()
            .fold(0, |b, (i, t)| if t.objective < self.trials[b].objective { i } else { b });
        Ok(SearchResult { optimizer, trials: self.trials, best, total_wall_time_s: self.start.elapsed().as_secs_f64() })
    }
}

/// Every grid point, in lexicographic dimension order.
pub fn grid_search<F>(space: &ParamSpace, mut objective: F) -> Result<SearchResult>
where
    F: FnMut(&Assignment) -> Result<f64>,
{
    space.validate()?;
    let grid = space.grid();
    if space.dims.is_empty() || grid.is_empty() {
        return Err(Error::domain("grid search needs a non-empty grid"));
    }
    let mut rec = Recorder::new(&mut objective);
    for a in grid {
        rec.eval(a, TrialSource::Grid)?;
    }
    rec.finish(OptimizerKind::Grid)
}

/// `n_trials` seeded draws. With `without_replacement` on a fully discrete
/// space the draws are distinct points (capped at the space size).
pub fn random_search<F>(
    space: &ParamSpace,
    mut objective: F,
    n_trials: usize,
    seed: u64,
    without_replacement: bool,
) -> Result<SearchResult>
where
    F: FnMut(&Assignment) -> Result<f64>,
{
    space.validate()?;
    if n_trials == 0 {
        return Err(Error::config("random search needs n_trials >= 1"));
    }
    let mut r = rng::stream(seed, "hpo.random");
    let points: Vec<Assignment> = match (without_replacement, space.enumerate_discrete()) {
        (true, Some(mut all)) => {
            all.shuffle(&mut r);
            all.truncate(n_trials);
            all
        }
        (true, None) => return Err(Error::config("sampling without replacement needs a fully discrete space")),
        (false, _) => (0..n_trials).map(|_| space.sample(&mut r)).collect(),
    };
    let mut rec = Recorder::new(&mut objective);
    for a in points {
        rec.eval(a, TrialSource::Random)?;
    }
    rec.finish(OptimizerKind::Random)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BayesConfig {
    pub budget: usize,
    pub n_init: usize,
    pub n_candidates: usize,
}

impl Default for BayesConfig {
    fn default() -> Self {
        BayesConfig { budget: 15, n_init: 5, n_candidates: 512 }
    }
}

/// `n_init` random trials, then one EI-argmax query per round over
/// `n_candidates` seeded random points. Inputs are encoded to the unit cube
/// and outputs standardised before each surrogate fit. `budget == n_init`
/// degenerates to random search.
pub fn bayes_opt<F>(space: &ParamSpace, mut objective: F, cfg: &BayesConfig, seed: u64) -> Result<SearchResult>
where
    F: FnMut(&Assignment) -> Result<f64>,
{
    space.validate()?;
    if cfg.n_init < 2 || cfg.budget < cfg.n_init || cfg.n_candidates == 0 {
        return Err(Error::config("bayes_opt needs budget >= n_init >= 2 and at least one candidate"));
    }
    let mut init_rng = rng::stream(seed, "hpo.bayes.init");
    let mut cand_rng = rng::stream(seed, "hpo.bayes.candidates");
    let mut fallback_rng = rng::stream(seed, "hpo.bayes.fallback");
    let mut rec = Recorder::new(&mut objective);
    for _ in 0..cfg.n_init {
        rec.eval(space.sample(&mut init_rng), TrialSource::Random)?;
    }
    while rec.trials.len() < cfg.budget {
        let candidates: Vec<Assignment> = (0..cfg.n_candidates).map(|_| space.sample(&mut cand_rng)).collect();
        let (next, source) = match propose(space, &rec.trials, &candidates) {
            Ok(Some(a)) => (a, TrialSource::Acquisition),
            Ok(None) => {
                log::warn!("every candidate was already evaluated; drawing at random");
                (space.sample(&mut fallback_rng), TrialSource::Fallback)
            }
            Err(e) => {
                log::warn!("surrogate failed ({e}); drawing at random");
                (space.sample(&mut fallback_rng), TrialSource::Fallback)
            }
        };
        rec.eval(next, source)?;
    }
    rec.finish(OptimizerKind::Bayes)
}

fn propose(space: &ParamSpace, trials: &[Trial], candidates: &[Assignment]) -> Result<Option<Assignment>> {
    let ys: Vec<f64> = trials.iter().map(|t| t.objective).collect();
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if sd > 0.0 { sd } else { 1.0 };
    let z: Vec<f64> = ys.iter().map(|y| (y - mean) / scale).collect();
    let x: Vec<Vec<f64>> = trials.iter().map(|t| space.encode(&t.params)).collect();
    let gp = GpSurrogate::fit_marginal_likelihood(x, z.clone())?;
    let best = z.iter().copied().fold(f64::INFINITY, f64::min);
    let mut pick: Option<(f64, &Assignment)> = None;
    for c in candidates {
        if trials.iter().any(|t| &t.params == c) {
            continue;
        }
        let ei = expected_improvement(&gp, &space.encode(c), best);
        if !ei.is_finite() {
            return Err(Error::Numerical("expected improvement is not finite".into()));
        }
        if pick.is_none_or(|(b, _)| ei > b) {
            pick = Some((ei, c));
        }
    }
    Ok(pick.map(|p| p.1.clone()))
}
