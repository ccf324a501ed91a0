//! `alpha-digger` subcommands. Each command prints exactly one JSON summary
//! line on stdout; logs go to stderr. Exit codes: 0 success, 1 runtime
//! failure, 2 usage or config error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use alpha_digger::dataset::read_posts;
use alpha_digger::pipeline::{
    emit_reports, evaluate_estimator, generate_corpora, load_corpora, parse_overrides, prepare_phase2, run_experiment,
    run_fixed, run_phase1, run_phase2, save_cells, save_phase1, CellReport, ExperimentConfig, Phase2Data, StageError,
    SENTIMENT_MODEL,
};
use alpha_digger::seqnn::{load_sentiment_file, SentimentPredictor};
use alpha_digger::tabular::{Estimator, ModelKind};
use alpha_digger::Error;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "alpha-digger", version, about = "Sentiment-driven stock movement experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "ALPHA_DIGGER_THREADS")]
    pub threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(long, short, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Config overrides as dotted `key=value` pairs.
    #[arg(value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args, Debug, Clone)]
pub struct RunDir {
    /// Run directory, overriding `out_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SentimentSource {
    /// Trained sentiment model; phase 1 is rerun when omitted.
    #[arg(long)]
    pub sentiment: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write generated corpora as <out>/{phase1,before,during}/{posts,prices}.csv.
    GenData {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dir: RunDir,
    },
    /// Train the sentiment model and report held-out accuracy.
    TrainSentiment {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dir: RunDir,
    },
    /// Score posts with a trained sentiment model, one row per input post.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit one model kind with fixed hyperparameters and evaluate Test1/Test2.
    TrainPredict {
        #[arg(long)]
        kind: ModelKind,
        #[command(flatten)]
        sentiment: SentimentSource,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dir: RunDir,
    },
    /// Run the configured model x optimizer search grid and write reports.
    Hpo {
        #[command(flatten)]
        sentiment: SentimentSource,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dir: RunDir,
    },
    /// Evaluate a saved movement model on Test1 and Test2.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        sentiment: SentimentSource,
        #[command(flatten)]
        common: Common,
    },
    /// Full experiment: data, phase 1, phase 2, reports, manifest.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dir: RunDir,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData { .. } => "gen-data",
            Command::TrainSentiment { .. } => "train-sentiment",
            Command::Score { .. } => "score",
            Command::TrainPredict { .. } => "train-predict",
            Command::Hpo { .. } => "hpo",
            Command::Evaluate { .. } => "evaluate",
            Command::Run { .. } => "run",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::GenData { common, .. }
            | Command::TrainSentiment { common, .. }
            | Command::Score { common, .. }
            | Command::TrainPredict { common, .. }
            | Command::Hpo { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Run { common, .. } => common,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub stage: Option<String>,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, stage: None, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Config(_)) { EXIT_CONFIG } else { EXIT_RUNTIME };
        Failure { code, stage: None, message: e.to_string() }
    }
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        let code = if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME };
        Failure { code, stage: Some(e.stage.to_string()), message: e.to_string() }
    }
}

/// Tags a core error with the stage it came from.
fn at(stage: &str) -> impl Fn(Error) -> Failure + '_ {
    move |e| {
        let mut f = Failure::from(e);
        f.stage = Some(stage.to_string());
        f.message = format!("stage {stage} failed: {}", f.message);
        f
    }
}

type Outcome = std::result::Result<Value, Failure>;

pub fn load_config(common: &Common, out: Option<&Path>) -> std::result::Result<ExperimentConfig, Failure> {
    let mut overrides = parse_overrides(&common.overrides)?;
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    let mut cfg = match &common.config {
        Some(path) if !path.is_file() => {
            return Err(Failure::config(format!("config file {} does not exist", path.display())))
        }
        Some(path) => ExperimentConfig::load(path, &overrides)?,
        None => ExperimentConfig::from_toml_str("", &overrides)?,
    };
    if let Some(out) = out {
        cfg.out_dir = out.to_path_buf();
    }
    Ok(cfg)
}

fn init_threads(n: Option<usize>) -> std::result::Result<(), Failure> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Failure::config("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn sentiment_model(cfg: &ExperimentConfig, src: &SentimentSource) -> std::result::Result<SentimentPredictor, Failure> {
    match &src.sentiment {
        Some(path) => load_sentiment_file(path).map_err(at("load-sentiment")),
        None => {
            let corpora = load_corpora(cfg).map_err(at("data"))?;
            Ok(run_phase1(cfg, &corpora.phase1).map_err(at("phase1"))?.predictor)
        }
    }
}

fn phase2_data(cfg: &ExperimentConfig, src: &SentimentSource) -> std::result::Result<Phase2Data, Failure> {
    let predictor = sentiment_model(cfg, src)?;
    let corpora = load_corpora(cfg).map_err(at("data"))?;
    prepare_phase2(cfg, &predictor, &corpora).map_err(at("features"))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn report_json(r: &alpha_digger::eval::ClassReport) -> Value {
    serde_json::to_value(r).unwrap_or(Value::Null)
}

fn cmd_gen_data(cfg: &ExperimentConfig) -> Outcome {
    let corpora = generate_corpora(cfg).map_err(at("data"))?;
    corpora.write(&cfg.out_dir).map_err(at("write"))?;
    Ok(json!({ "out_dir": path_str(&cfg.out_dir), "counts": corpora.summary() }))
}

fn cmd_train_sentiment(cfg: &ExperimentConfig) -> Outcome {
    let corpora = load_corpora(cfg).map_err(at("data"))?;
    let out = run_phase1(cfg, &corpora.phase1).map_err(at("phase1"))?;
    save_phase1(&out, &cfg.out_dir).map_err(at("write"))?;
    Ok(json!({ "model": path_str(&cfg.out_dir.join(SENTIMENT_MODEL)), "phase1": out.summary }))
}

fn cmd_score(model: &Path, input: &Path, out: &Path) -> Outcome {
    let predictor = load_sentiment_file(model).map_err(at("load-sentiment"))?;
    let posts = read_posts(input).map_err(at("read"))?;
    let texts: Vec<String> = posts.iter().map(|p| p.text.clone()).collect();
    let scores = predictor.score(&texts).map_err(at("score"))?;
    let mut text = String::from("index,date,sentiment\n");
    for (i, (p, s)) in posts.iter().zip(&scores).enumerate() {
        text.push_str(&format!("{i},{},{s}\n", p.date));
    }
    std::fs::write(out, text).map_err(|e| at("write")(Error::Io { path: out.to_path_buf(), source: e }))?;
    Ok(json!({ "out": path_str(out), "n_scored": scores.len() }))
}

fn cmd_train_predict(cfg: &ExperimentConfig, kind: ModelKind, src: &SentimentSource) -> Outcome {
    let data = phase2_data(cfg, src)?;
    let (est, test1, test2) = run_fixed(cfg, &data, kind).map_err(at("fit"))?;
    let dir = cfg.out_dir.join("models");
    std::fs::create_dir_all(&dir).map_err(|e| at("write")(Error::Io { path: dir.clone(), source: e }))?;
    let path = dir.join(format!("{kind}_fixed.json"));
    est.save(&path).map_err(at("write"))?;
    Ok(json!({
        "model": path_str(&path),
        "kind": kind.name(),
        "test1": report_json(&test1),
        "test2": report_json(&test2),
    }))
}

fn cmd_hpo(cfg: &ExperimentConfig, src: &SentimentSource) -> Outcome {
    let data = phase2_data(cfg, src)?;
    let cells = run_phase2(cfg, &data).map_err(at("phase2"))?;
    save_cells(&cells, &cfg.out_dir).map_err(at("write"))?;
    let reports: Vec<CellReport> = cells.iter().map(|c| c.report.clone()).collect();
    emit_reports(&reports, &cfg.out_dir).map_err(at("reports"))?;
    let summary: Vec<Value> = reports
        .iter()
        .map(|c| {
            json!({
                "model": c.model.name(),
                "optimizer": c.optimizer.name(),
                "best_cv_error": c.best_cv_error,
                "test1_accuracy": c.test1.accuracy,
                "test2_accuracy": c.test2.accuracy,
            })
        })
        .collect();
    Ok(json!({ "out_dir": path_str(&cfg.out_dir), "cells": summary }))
}

fn cmd_evaluate(cfg: &ExperimentConfig, model: &Path, src: &SentimentSource) -> Outcome {
    let est = Estimator::load(model).map_err(at("load-model"))?;
    let data = phase2_data(cfg, src)?;
    let (test1, test2) = evaluate_estimator(&est, &data).map_err(at("evaluate"))?;
    Ok(json!({ "model": path_str(model), "test1": report_json(&test1), "test2": report_json(&test2) }))
}

fn cmd_run(cfg: &ExperimentConfig) -> Outcome {
    let summary = run_experiment(cfg, &cfg.out_dir)?;
    Ok(serde_json::to_value(summary).unwrap_or(Value::Null))
}

fn dispatch(command: &Command) -> Outcome {
    let common = command.common();
    init_logging(common.verbose);
    init_threads(common.threads)?;
    match command {
        Command::Score { model, input, out, .. } => cmd_score(model, input, out),
        Command::GenData { dir, .. } => cmd_gen_data(&load_config(common, dir.out.as_deref())?),
        Command::TrainSentiment { dir, .. } => cmd_train_sentiment(&load_config(common, dir.out.as_deref())?),
        Command::TrainPredict { kind, sentiment, dir, .. } => {
            cmd_train_predict(&load_config(common, dir.out.as_deref())?, *kind, sentiment)
        }
        Command::Hpo { sentiment, dir, .. } => cmd_hpo(&load_config(common, dir.out.as_deref())?, sentiment),
        Command::Evaluate { model, sentiment, .. } => cmd_evaluate(&load_config(common, None)?, model, sentiment),
        Command::Run { dir, .. } => cmd_run(&load_config(common, dir.out.as_deref())?),
    }
}

/// Parses, runs, prints the summary line, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return EXIT_OK;
        }
        Err(e) => {
            let _ = e.print();
            println!(
                "{}",
                json!({ "ok": false, "command": Value::Null, "stage": "usage", "error": e.kind().to_string() })
            );
            return EXIT_CONFIG;
        }
    };
    let name = cli.command.name();
    match dispatch(&cli.command) {
        Ok(mut v) => {
            if let Value::Object(m) = &mut v {
                m.insert("ok".into(), Value::Bool(true));
                m.insert("command".into(), Value::String(name.into()));
            }
            println!("{v}");
            EXIT_OK
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            println!("{}", json!({ "ok": false, "command": name, "stage": f.stage, "error": f.message }));
            f.code
        }
    }
}
