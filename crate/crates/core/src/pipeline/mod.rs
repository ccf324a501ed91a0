//! End-to-end experiment: corpora, sentiment training, feature assembly,
//! the model × optimizer search grid, and report emission under one run
//! directory with a manifest of every artifact.

mod config;
mod data;
mod phase1;
mod phase2;
mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hpo::write_trials_csv;
use crate::seqnn::save_sentiment_file;

pub use config::{
    apply_override, cell_order, default_space, market_synth, parse_overrides, phase1_synth, DataConfig, DataSource,
    ExperimentConfig, Phase2Config, SentimentSection, SplitUnit, TextConfig,
};
pub use data::{generate_corpora, load_corpora, Corpora, CorporaSummary, PeriodData, PHASE1_DIR};
pub use phase1::{run_phase1, Phase1Output, Phase1Summary};
pub use phase2::{
    check_disjoint, evaluate_estimator, fit_and_evaluate, prepare_phase2, run_cell, run_fixed, run_phase2, CellReport,
    CellResult, LabelledSet, Phase2Data, RowId,
};
pub use report::{emit_reports, CLASS_REPORTS, REPORTS_JSON, RESULTS_GRID, SHIFT_REPORT, TIMINGS};

pub const MANIFEST: &str = "manifest.json";
pub const SENTIMENT_MODEL: &str = "models/sentiment.json";
pub const PHASE1_HISTORY: &str = "phase1_history.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// False until every stage has finished.
    pub complete: bool,
    pub config_hash: String,
    pub seed: u64,
    pub versions: Versions,
    pub stages: Vec<StageTiming>,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub package: String,
    pub sentiment_model_format: u32,
    pub tabular_model_format: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            package: env!("CARGO_PKG_VERSION").to_string(),
            sentiment_model_format: crate::seqnn::MODEL_FORMAT_VERSION,
            tabular_model_format: crate::tabular::MODEL_FORMAT_VERSION,
        }
    }
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        RunManifest {
            complete: false,
            config_hash: cfg.hash(),
            seed: cfg.seed,
            versions: Versions::default(),
            stages: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Records `path` (inside `dir`) with its digest, replacing an older entry.
    pub fn add_artifact(&mut self, dir: &Path, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let rel = path.strip_prefix(dir).unwrap_or(path);
        let name = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(Artifact { path: name, sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    config::hex(&Sha256::digest(bytes))
}

/// A failure tagged with the stage it happened in.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn is_config(&self) -> bool {
        matches!(self.source, Error::Config(_))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub config_hash: String,
    pub phase1: Phase1Summary,
    pub n_train: usize,
    pub n_test1: usize,
    pub n_test2: usize,
    pub cells: Vec<CellSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub model: String,
    pub optimizer: String,
    pub test1_accuracy: f64,
    pub test2_accuracy: f64,
}

/// Stage runner that keeps the manifest on disk current, so an interrupted
/// run leaves a manifest with `complete: false` and the finished stages.
struct Run<'a> {
    dir: &'a Path,
    manifest: RunManifest,
}

impl<'a> Run<'a> {
    fn stage<T>(
        &mut self,
        stage: &'static str,
        f: impl FnOnce() -> Result<(T, Vec<PathBuf>)>,
    ) -> std::result::Result<T, StageError> {
        log::info!("stage {stage}");
        let tag = |source| StageError { stage, source };
        let start = Instant::now();
        let (out, files) = f().map_err(tag)?;
        self.manifest.stages.push(StageTiming { stage: stage.to_string(), wall_time_s: start.elapsed().as_secs_f64() });
        for p in files {
            self.manifest.add_artifact(self.dir, &p).map_err(tag)?;
        }
        self.manifest.write(self.dir).map_err(tag)?;
        Ok(out)
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Writes the sentiment model and its training history.
pub fn save_phase1(out: &Phase1Output, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(&dir.join("models"))?;
    let model = dir.join(SENTIMENT_MODEL);
    save_sentiment_file(&model, &out.predictor)?;
    let hist = write_text(&dir.join(PHASE1_HISTORY), &serde_json::to_string_pretty(&out.history)?)?;
    Ok(vec![model, hist])
}

/// Writes `models/<model>_<optimizer>.json` and `trials/<model>_<optimizer>.csv`
/// for every cell.
pub fn save_cells(cells: &[CellResult], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for sub in ["models", "trials"] {
        create_dir(&dir.join(sub))?;
    }
    for c in cells {
        let stem = format!("{}_{}", c.report.model, c.report.optimizer);
        let model = dir.join("models").join(format!("{stem}.json"));
        c.estimator.save(&model)?;
        let trials = dir.join("trials").join(format!("{stem}.csv"));
        write_trials_csv(&trials, &c.search)?;
        files.extend([model, trials]);
    }
    Ok(files)
}

/// Runs the whole protocol into `dir`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> std::result::Result<RunSummary, StageError> {
    let setup = |source| StageError { stage: "setup", source };
    cfg.validate().map_err(setup)?;
    create_dir(&dir.join("models")).map_err(setup)?;
    let mut run = Run { dir, manifest: RunManifest::new(cfg) };
    run.manifest.write(dir).map_err(setup)?;
    let config_path = dir.join("config.json");
    run.stage("config", || Ok(((), vec![write_text(&config_path, &serde_json::to_string_pretty(cfg)?)?])))?;

    let corpora = run.stage("data", || Ok((load_corpora(cfg)?, vec![])))?;
    let phase1 = run.stage("phase1", || {
        let out = run_phase1(cfg, &corpora.phase1)?;
        let files = save_phase1(&out, dir)?;
        Ok((out, files))
    })?;
    let data = run.stage("features", || Ok((prepare_phase2(cfg, &phase1.predictor, &corpora)?, vec![])))?;
    let cells = run.stage("phase2", || {
        let cells = run_phase2(cfg, &data)?;
        let files = save_cells(&cells, dir)?;
        Ok((cells, files))
    })?;
    let reports: Vec<CellReport> = cells.iter().map(|c| c.report.clone()).collect();
    run.stage("reports", || Ok(((), emit_reports(&reports, dir)?)))?;

    run.manifest.complete = true;
    run.manifest.write(dir).map_err(|source| StageError { stage: "reports", source })?;
    Ok(RunSummary {
        out_dir: dir.to_path_buf(),
        config_hash: run.manifest.config_hash.clone(),
        phase1: phase1.summary,
        n_train: data.train.table.len(),
        n_test1: data.test1.table.len(),
        n_test2: data.test2.table.len(),
        cells: reports
            .iter()
            .map(|c| CellSummary {
                model: c.model.to_string(),
                optimizer: c.optimizer.to_string(),
                test1_accuracy: c.test1.accuracy,
                test2_accuracy: c.test2.accuracy,
            })
            .collect(),
    })
}
