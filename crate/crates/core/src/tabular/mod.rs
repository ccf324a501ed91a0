//! Phase-2 movement classifiers behind one fit/predict interface.
//!
//! Four model kinds share [`FitConfig`]: a random forest (`rf`), gradient
//! boosting with level-wise (`xgb`) or leaf-wise (`lgb`) growth, and a linear
//! SVM (`svm`). Hyperparameters travel as a name → number map so search code
//! can treat every kind alike; [`param_specs`] documents names, defaults and
//! legal ranges.

mod forest;
mod gbdt;
mod svm;
mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureRow, N_FEATURES};
use crate::error::{Error, Result};

pub use forest::{fit_random_forest, ForestModel, ForestParams};
pub use gbdt::{fit_gbdt, logistic_loss, GbdtModel, GbdtParams, Growth};
pub use svm::{dual_gradients, fit_linear_svm, SvmFit, SvmModel, SvmParams};
pub use tree::{grow_cart, weighted_gini, CartParams, TreeNode};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Dense row-major feature matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    n_features: usize,
    x: Vec<f64>,
    y: Vec<u8>,
}

impl Table {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::domain(format!("{} rows vs {} labels", rows.len(), labels.len())));
        }
        let n_features = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_features) {
            return Err(Error::domain("rows have differing feature counts"));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::domain("features must be finite"));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::domain("labels must be 0 or 1"));
        }
        Ok(Table { n_features, x: rows.into_iter().flatten().collect(), y: labels })
    }

    pub fn from_feature_rows(rows: &[FeatureRow]) -> Self {
        Table {
            n_features: N_FEATURES,
            x: rows.iter().flat_map(|r| r.features()).collect(),
            y: rows.iter().map(|r| r.label).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn value(&self, i: usize, feature: usize) -> f64 {
        self.x[i * self.n_features + feature]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.y[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    pub fn is_single_class(&self) -> bool {
        self.y.iter().all(|&v| v == self.y[0])
    }

    pub fn subset(&self, idx: &[usize]) -> Table {
        Table {
            n_features: self.n_features,
            x: idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Svm,
    Rf,
    Xgb,
    Lgb,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Svm, ModelKind::Rf, ModelKind::Lgb, ModelKind::Xgb];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Svm => "svm",
            ModelKind::Rf => "rf",
            ModelKind::Xgb => "xgb",
            ModelKind::Lgb => "lgb",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::config(format!("unknown model kind {s:?} (expected svm, rf, xgb or lgb)")))
    }
}

/// One tunable hyperparameter: legal closed range, and whether it is integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: f64,
    pub min: f64,
    pub max: f64,
    pub integer: bool,
    /// When set, `min` itself is excluded.
    pub min_exclusive: bool,
}

const fn spec(name: &'static str, default: f64, min: f64, max: f64, integer: bool) -> ParamSpec {
    ParamSpec { name, default, min, max, integer, min_exclusive: false }
}

const fn spec_open(name: &'static str, default: f64, min: f64, max: f64) -> ParamSpec {
    ParamSpec { name, default, min, max, integer: false, min_exclusive: true }
}

const RF_SPECS: &[ParamSpec] = &[
    spec("n_trees", 100.0, 1.0, 2000.0, true),
    spec("max_depth", 8.0, 1.0, 64.0, true),
    spec("min_samples_leaf", 1.0, 1.0, 10_000.0, true),
    spec_open("max_features", 0.5, 0.0, 1.0),
    spec("bootstrap", 1.0, 0.0, 1.0, true),
];

const XGB_SPECS: &[ParamSpec] = &[
    spec("n_rounds", 100.0, 0.0, 5000.0, true),
    spec_open("learning_rate", 0.1, 0.0, 1.0),
    spec("max_depth", 4.0, 1.0, 32.0, true),
    spec("lambda", 1.0, 0.0, 1e6, false),
    spec("min_samples_leaf", 1.0, 1.0, 10_000.0, true),
    spec_open("subsample", 1.0, 0.0, 1.0),
];

const LGB_SPECS: &[ParamSpec] = &[
    spec("n_rounds", 100.0, 0.0, 5000.0, true),
    spec_open("learning_rate", 0.1, 0.0, 1.0),
    spec("max_leaves", 15.0, 2.0, 4096.0, true),
    spec("max_depth", 0.0, 0.0, 64.0, true),
    spec("lambda", 1.0, 0.0, 1e6, false),
    spec("min_samples_leaf", 1.0, 1.0, 10_000.0, true),
    spec_open("subsample", 1.0, 0.0, 1.0),
];

const SVM_SPECS: &[ParamSpec] = &[spec_open("c", 1.0, 0.0, 1e6), spec("max_iter", 1000.0, 1.0, 1e7, true)];

/// Hyperparameters accepted by `kind`. For `lgb`, `max_depth = 0` means no cap.
pub fn param_specs(kind: ModelKind) -> &'static [ParamSpec] {
    match kind {
        ModelKind::Rf => RF_SPECS,
        ModelKind::Xgb => XGB_SPECS,
        ModelKind::Lgb => LGB_SPECS,
        ModelKind::Svm => SVM_SPECS,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub kind: ModelKind,
    /// Overrides of the kind's defaults.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: u64,
}

impl FitConfig {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        FitConfig { kind, params: BTreeMap::new(), seed }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let specs = param_specs(self.kind);
        for (name, &v) in &self.params {
            let s = specs
                .iter()
                .find(|s| s.name == name)
                .ok_or_else(|| Error::config(format!("{} does not take hyperparameter {name:?}", self.kind)))?;
            let low_ok = if s.min_exclusive { v > s.min } else { v >= s.min };
            if !v.is_finite() || !low_ok || v > s.max || (s.integer && v.fract() != 0.0) {
                let open = if s.min_exclusive { "(" } else { "[" };
                let int = if s.integer { " integer" } else { "" };
                return Err(Error::config(format!(
                    "{}.{name} = {v} outside{int} range {open}{}, {}]",
                    self.kind, s.min, s.max
                )));
            }
        }
        Ok(())
    }

    /// Effective value of a hyperparameter (override or default).
    pub fn get(&self, name: &str) -> f64 {
        self.params.get(name).copied().unwrap_or_else(|| {
            param_specs(self.kind)
                .iter()
                .find(|s| s.name == name)
                .unwrap_or_else(|| panic!("{} has no hyperparameter {name}", self.kind))
                .default
        })
    }

    fn get_usize(&self, name: &str) -> usize {
        self.get(name) as usize
    }

    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.get_usize("n_trees"),
            max_depth: self.get_usize("max_depth"),
            min_samples_leaf: self.get_usize("min_samples_leaf"),
            max_features: self.get("max_features"),
            bootstrap: self.get("bootstrap") != 0.0,
        }
    }

    pub fn gbdt_params(&self) -> GbdtParams {
        let leafwise = self.kind == ModelKind::Lgb;
        GbdtParams {
            n_rounds: self.get_usize("n_rounds"),
            learning_rate: self.get("learning_rate"),
            growth: if leafwise { Growth::LeafWise } else { Growth::LevelWise },
            max_depth: self.get_usize("max_depth"),
            max_leaves: if leafwise { self.get_usize("max_leaves") } else { usize::MAX },
            lambda: self.get("lambda"),
            min_samples_leaf: self.get_usize("min_samples_leaf"),
            subsample: self.get("subsample"),
        }
    }

    pub fn svm_params(&self) -> SvmParams {
        SvmParams { c: self.get("c"), max_iter: self.get_usize("max_iter"), ..SvmParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TabularModel {
    Forest(ForestModel),
    Gbdt(GbdtModel),
    Svm(SvmModel),
}

impl TabularModel {
    pub fn predict_one(&self, x: &[f64]) -> f64 {
        match self {
            TabularModel::Forest(m) => m.predict_one(x),
            TabularModel::Gbdt(m) => m.predict_one(x),
            TabularModel::Svm(m) => m.predict_one(x),
        }
    }
}

pub fn fit(t: &Table, cfg: &FitConfig) -> Result<TabularModel> {
    cfg.validate()?;
    if t.is_empty() {
        return Err(Error::domain("cannot fit on zero rows"));
    }
    Ok(match cfg.kind {
        ModelKind::Rf => TabularModel::Forest(fit_random_forest(t, &cfg.forest_params(), cfg.seed)?),
        ModelKind::Xgb | ModelKind::Lgb => TabularModel::Gbdt(fit_gbdt(t, &cfg.gbdt_params(), cfg.seed)?),
        ModelKind::Svm => TabularModel::Svm(fit_linear_svm(t, &cfg.svm_params(), cfg.seed)?.model),
    })
}

/// A configuration plus (once fitted) its model.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    pub config: FitConfig,
    model: Option<TabularModel>,
}

impl Estimator {
    pub fn new(config: FitConfig) -> Self {
        Estimator { config, model: None }
    }

    pub fn fit(&mut self, t: &Table) -> Result<()> {
        self.model = Some(fit(t, &self.config)?);
        Ok(())
    }

    pub fn model(&self) -> Option<&TabularModel> {
        self.model.as_ref()
    }

    fn n_features(&self) -> Option<usize> {
        Some(match self.model.as_ref()? {
            TabularModel::Svm(m) => m.weights.len(),
            _ => return None,
        })
    }

    pub fn predict_proba(&self, t: &Table) -> Result<Vec<f64>> {
        let model = self.model.as_ref().ok_or_else(|| Error::State("model has not been fitted".into()))?;
        if let Some(d) = self.n_features() {
            if d != t.n_features() && !t.is_empty() {
                return Err(Error::domain(format!("model expects {d} features, got {}", t.n_features())));
            }
        }
        Ok((0..t.len()).map(|i| model.predict_one(t.row(i))).collect())
    }

    /// Labels by thresholding probabilities at 0.5 (the sign rule for SVM).
    pub fn predict(&self, t: &Table) -> Result<Vec<u8>> {
        Ok(self.predict_proba(t)?.into_iter().map(|p| (p >= 0.5) as u8).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let model = self.model.as_ref().ok_or_else(|| Error::State("model has not been fitted".into()))?;
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kind: self.config.kind,
            config: self.config.clone(),
            model: model.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(s)?;
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported model file version {}", f.format_version)));
        }
        let consistent = matches!(
            (f.kind, &f.model),
            (ModelKind::Rf, TabularModel::Forest(_))
                | (ModelKind::Xgb | ModelKind::Lgb, TabularModel::Gbdt(_))
                | (ModelKind::Svm, TabularModel::Svm(_))
        );
        if !consistent || f.kind != f.config.kind {
            return Err(Error::Config("model file kind does not match its contents".into()));
        }
        f.config.validate()?;
        Ok(Estimator { config: f.config, model: Some(f.model) })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Estimator::from_json(&s)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    kind: ModelKind,
    config: FitConfig,
    model: TabularModel,
}
