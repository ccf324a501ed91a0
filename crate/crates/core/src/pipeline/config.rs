//! Declarative experiment configuration (TOML) with dotted-key overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::SynthConfig;
use crate::error::{Error, Result};
use crate::hpo::{BayesConfig, Dimension, OptimizerKind, ParamSpace, ParamValue};
use crate::seqnn::{AdamHyper, Preset, SentimentConfig, TrainRun};
use crate::tabular::{param_specs, FitConfig, ModelKind};
use crate::text::TokenizerKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Run directory; the command line may override it.
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub text: TextConfig,
    pub sentiment: SentimentSection,
    pub phase2: Phase2Config,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            out_dir: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            text: TextConfig::default(),
            sentiment: SentimentSection::default(),
            phase2: Phase2Config::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    #[default]
    Synthetic,
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Directory holding `phase1/`, `before/` and `during/`, each with
    /// `posts.csv` and `prices.csv`. Used when `source = "files"`.
    pub dir: Option<PathBuf>,
    /// Generator for the sentiment-training corpus.
    pub phase1: SynthConfig,
    /// Generator for the movement corpus; its trailing days form the shifted period.
    pub market: SynthConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { source: DataSource::Synthetic, dir: None, phase1: phase1_synth(), market: market_synth() }
    }
}

/// Separable corpus: every day calm, labels follow the planted mood exactly.
pub fn phase1_synth() -> SynthConfig {
    SynthConfig { noise_rate: 0.0, regime_rate: 0.0, shift_delta: 0.0, during_fraction: 0.0, ..SynthConfig::default() }
}

/// One post per trading day; 5,000 rows before the shift and 2,500 during it.
pub fn market_synth() -> SynthConfig {
    SynthConfig { n_posts: 7500, n_days: 7500, during_fraction: 1.0 / 3.0, ..SynthConfig::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextConfig {
    pub tokenizer: TokenizerKind,
    /// Pretrained vectors in word2vec text format. Without one, seeded vectors
    /// are generated for every token of the phase-1 corpus.
    pub embedding_file: Option<PathBuf>,
    pub embedding_dim: usize,
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig { tokenizer: TokenizerKind::Whitespace, embedding_file: None, embedding_dim: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SentimentSection {
    pub preset: Preset,
    /// Overrides the preset's layer widths.
    pub hidden: Option<Vec<usize>>,
    pub heads: usize,
    pub attention_out: Option<usize>,
    pub train_embeddings: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Global gradient-norm bound; 0 disables clipping.
    pub clip_norm: f64,
    pub train_fraction: f64,
}

impl Default for SentimentSection {
    fn default() -> Self {
        let adam = AdamHyper::default();
        let model = SentimentConfig::default();
        SentimentSection {
            preset: Preset::Desk,
            hidden: None,
            heads: model.heads,
            attention_out: None,
            train_embeddings: false,
            epochs: 10,
            batch_size: 32,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            clip_norm: adam.clip_norm.unwrap_or(0.0),
            train_fraction: 0.9,
        }
    }
}

impl SentimentSection {
    pub fn model_config(&self) -> SentimentConfig {
        let mut c = SentimentConfig::preset(self.preset);
        if let Some(h) = &self.hidden {
            c.hidden = h.clone();
        }
        c.heads = self.heads;
        c.attention_out = self.attention_out;
        c.train_embeddings = self.train_embeddings;
        c
    }

    pub fn train_run(&self, seed: u64) -> TrainRun {
        TrainRun {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamHyper {
                learning_rate: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
                ..AdamHyper::default()
            },
            seed,
        }
    }
}

/// Grouping applied before the train/Test1 split of the pre-shift rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitUnit {
    /// Every post row is split independently.
    Row,
    /// All rows of a trading day land on the same side.
    #[default]
    Day,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Phase2Config {
    pub train_fraction: f64,
    pub split_unit: SplitUnit,
    pub models: Vec<ModelKind>,
    pub optimizers: Vec<OptimizerKind>,
    pub cv_folds: usize,
    pub random_trials: usize,
    pub bayes: BayesConfig,
    /// Search space per model name; missing kinds use [`default_space`].
    pub spaces: BTreeMap<String, ParamSpace>,
    /// Fixed hyperparameters per model name, applied under every trial.
    pub fixed: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Default for Phase2Config {
    fn default() -> Self {
        Phase2Config {
            train_fraction: 0.8,
            split_unit: SplitUnit::Day,
            models: ModelKind::ALL.to_vec(),
            optimizers: OptimizerKind::ALL.to_vec(),
            cv_folds: 5,
            random_trials: 8,
            bayes: BayesConfig { budget: 8, n_init: 4, n_candidates: 512 },
            spaces: BTreeMap::new(),
            fixed: BTreeMap::new(),
        }
    }
}

impl Phase2Config {
    pub fn space(&self, kind: ModelKind) -> ParamSpace {
        self.spaces.get(kind.name()).cloned().unwrap_or_else(|| default_space(kind))
    }

    /// Configured (model, optimizer) cells in report order.
    pub fn cells(&self) -> Vec<(ModelKind, OptimizerKind)> {
        let mut cells: Vec<_> =
            self.models.iter().flat_map(|&m| self.optimizers.iter().map(move |&o| (m, o))).collect();
        cells.sort_by_key(|&(m, o)| cell_order(m, o));
        cells.dedup();
        cells
    }

    fn fixed_for(&self, kind: ModelKind) -> BTreeMap<String, f64> {
        self.fixed.get(kind.name()).cloned().unwrap_or_default()
    }

    /// Fit configuration for one trial: fixed values, then the trial's point.
    pub fn fit_config(&self, kind: ModelKind, point: &BTreeMap<String, ParamValue>, seed: u64) -> Result<FitConfig> {
        let mut cfg = FitConfig::new(kind, seed);
        cfg.params = self.fixed_for(kind);
        for (name, v) in point {
            let x = v
                .as_f64()
                .ok_or_else(|| Error::config(format!("{kind}.{name}: categorical value {v} is not numeric")))?;
            cfg.params.insert(name.clone(), x);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sort key placing cells in the canonical table order.
pub fn cell_order(m: ModelKind, o: OptimizerKind) -> (usize, usize) {
    let mi = ModelKind::ALL.iter().position(|&k| k == m).unwrap_or(usize::MAX);
    let oi = OptimizerKind::ALL.iter().position(|&k| k == o).unwrap_or(usize::MAX);
    (mi, oi)
}

fn ints(v: &[i64]) -> Vec<ParamValue> {
    v.iter().map(|&i| ParamValue::Int(i)).collect()
}

fn floats(v: &[f64]) -> Vec<ParamValue> {
    v.iter().map(|&x| ParamValue::Float(x)).collect()
}

/// Built-in search spaces: small grids inside wider sampling ranges.
pub fn default_space(kind: ModelKind) -> ParamSpace {
    let rounds = Dimension::integer("n_rounds", 30, 150).with_grid(ints(&[50, 100]));
    let lr = Dimension::continuous("learning_rate", 0.05, 0.5, true).with_grid(floats(&[0.1, 0.3]));
    ParamSpace::new(match kind {
        ModelKind::Svm => vec![Dimension::continuous("c", 0.01, 100.0, true)],
        ModelKind::Rf => vec![
            Dimension::integer("n_trees", 30, 150).with_grid(ints(&[50, 100])),
            Dimension::integer("max_depth", 4, 12).with_grid(ints(&[6, 12])),
        ],
        ModelKind::Xgb => vec![rounds, Dimension::integer("max_depth", 2, 6).with_grid(ints(&[3, 5])), lr],
        ModelKind::Lgb => vec![rounds, Dimension::integer("max_leaves", 4, 32).with_grid(ints(&[8, 31])), lr],
    })
}

impl ExperimentConfig {
    /// Parses TOML, applies `key.path=value` overrides, then validates.
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        for (key, raw) in overrides {
            apply_override(&mut doc, key, raw)?;
        }
        let cfg: ExperimentConfig =
            toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative data and embedding paths resolve against
    /// the file's directory.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(d) = &cfg.data.dir {
            cfg.data.dir = Some(base.join(d));
        }
        if let Some(f) = &cfg.text.embedding_file {
            cfg.text.embedding_file = Some(base.join(f));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        match self.data.source {
            DataSource::Synthetic => {
                self.data.phase1.validate()?;
                self.data.market.validate()?;
            }
            DataSource::Files if self.data.dir.is_none() => return fail("data.source = files needs data.dir".into()),
            DataSource::Files => {}
        }
        if self.text.embedding_file.is_none() && self.text.embedding_dim == 0 {
            return fail("text.embedding_dim must be >= 1".into());
        }
        let s = &self.sentiment;
        s.model_config().validate()?;
        s.train_run(0).validate().map_err(|e| Error::Config(format!("sentiment: {e}")))?;
        if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
            return fail("sentiment.train_fraction must be in (0,1)".into());
        }
        if !(0.0..1.0).contains(&s.beta1) || !(0.0..1.0).contains(&s.beta2) || !(s.clip_norm >= 0.0) {
            return fail("sentiment: need beta1, beta2 in [0,1) and clip_norm >= 0".into());
        }
        let p = &self.phase2;
        if !(p.train_fraction > 0.0 && p.train_fraction < 1.0) {
            return fail("phase2.train_fraction must be in (0,1)".into());
        }
        if p.models.is_empty() || p.optimizers.is_empty() {
            return fail("phase2 needs at least one model and one optimizer".into());
        }
        if p.cv_folds < 2 {
            return fail("phase2.cv_folds must be >= 2".into());
        }
        if p.random_trials == 0 {
            return fail("phase2.random_trials must be >= 1".into());
        }
        if p.bayes.n_init < 2 || p.bayes.budget < p.bayes.n_init || p.bayes.n_candidates == 0 {
            return fail("phase2.bayes needs budget >= n_init >= 2 and n_candidates >= 1".into());
        }
        for name in p.spaces.keys().chain(p.fixed.keys()) {
            name.parse::<ModelKind>()?;
        }
        for &kind in &p.models {
            let space = p.space(kind);
            space.validate()?;
            for d in &space.dims {
                if !param_specs(kind).iter().any(|s| s.name == d.name) {
                    return fail(format!("phase2.spaces.{kind}: {kind} does not take hyperparameter {:?}", d.name));
                }
            }
            let mut fixed = FitConfig::new(kind, 0);
            fixed.params = p.fixed_for(kind);
            fixed.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON rendering.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Sets `a.b.c` in the document. The value is read as a TOML literal when it
/// parses as one, otherwise as a bare string.
pub fn apply_override(doc: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("malformed override key {key:?}")));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| Error::config(format!("override {key:?}: `{p}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parses `key=value` override arguments.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    args.iter()
        .map(|a| {
            a.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::config(format!("override {a:?} is not key=value")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ExperimentConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.phase2.cells().len(), 12);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_toml_str("[phase2]\nbogus_key = 1\n", &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("bogus_key"), "{err}");
        let err = ExperimentConfig::from_toml_str("", &[("sentiment.nope".into(), "3".into())]).unwrap_err();
        assert!(err.to_string().contains("nope"), "{err}");
    }

    #[test]
    fn overrides_parse_literals_and_strings() {
        let o =
            parse_overrides(&["seed=7".into(), "phase2.models=[\"rf\"]".into(), "text.tokenizer=char".into()]).unwrap();
        let cfg = ExperimentConfig::from_toml_str("seed = 1\n", &o).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.phase2.models, vec![ModelKind::Rf]);
        assert_eq!(cfg.text.tokenizer, TokenizerKind::Char);
        assert!(parse_overrides(&["novalue".into()]).is_err());
    }

    #[test]
    fn spaces_parse_and_are_checked_against_the_model() {
        let ok = "[[phase2.spaces.svm]]\nname = \"c\"\ntype = \"continuous\"\nlow = 0.1\nhigh = 10.0\nlog = true\n";
        let cfg = ExperimentConfig::from_toml_str(ok, &[]).unwrap();
        assert_eq!(cfg.phase2.space(ModelKind::Svm).dims[0].name, "c");
        let bad = "[[phase2.spaces.svm]]\nname = \"depth\"\ntype = \"integer\"\nlow = 1\nhigh = 3\n";
        assert!(ExperimentConfig::from_toml_str(bad, &[]).is_err());
        assert!(ExperimentConfig::from_toml_str("[phase2.spaces.knn]\n", &[]).is_err());
    }

    #[test]
    fn default_spaces_are_valid() {
        for kind in ModelKind::ALL {
            default_space(kind).validate().unwrap();
        }
        assert_eq!(default_space(ModelKind::Xgb).grid_size(), 8);
        assert_eq!(default_space(ModelKind::Svm).grid_size(), 5);
    }

    #[test]
    fn cells_follow_table_order() {
        let mut p = Phase2Config::default();
        p.models = vec![ModelKind::Xgb, ModelKind::Svm];
        p.optimizers = vec![OptimizerKind::Bayes, OptimizerKind::Grid];
        assert_eq!(
            p.cells(),
            vec![
                (ModelKind::Svm, OptimizerKind::Grid),
                (ModelKind::Svm, OptimizerKind::Bayes),
                (ModelKind::Xgb, OptimizerKind::Grid),
                (ModelKind::Xgb, OptimizerKind::Bayes),
            ]
        );
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
