//! Hyperparameter search driving cross-validated model selection.
//!
//! Objectives are minimised; for model selection the objective is k-fold CV
//! classification error (one minus accuracy).

mod cv;
mod gp;
mod search;
mod space;

use std::path::Path;

use crate::error::{Error, Result};

pub use cv::{cv_error, error_rate, fold_assignment, k_fold_cv, CvConfig, CvOutcome};
pub use gp::{ei_gaussian, expected_improvement, gp_posterior, rbf, GpHyper, GpSurrogate};
pub use search::{bayes_opt, grid_search, random_search, BayesConfig, OptimizerKind, SearchResult, Trial, TrialSource};
pub use space::{Assignment, Dimension, Domain, ParamSpace, ParamValue, DEFAULT_GRID_POINTS};

/// Writes `index,params_json,objective,wall_time_s`, one row per trial.
pub fn write_trials_csv(path: &Path, result: &SearchResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_record(["index", "params_json", "objective", "wall_time_s"])?;
    for t in &result.trials {
        w.write_record([
            t.index.to_string(),
            serde_json::to_string(&t.params)?,
            t.objective.to_string(),
            format!("{:.3}", t.wall_time_s),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
