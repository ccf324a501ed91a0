//! Sentiment-model training on the phase-1 corpus with a held-out check.

use std::collections::HashSet;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::data::PeriodData;
use crate::dataset::{assemble_rows, split_indices, SplitSpec};
use crate::error::{Error, Result};
use crate::rng;
use crate::seqnn::{train_sentiment, SentimentPredictor, TrainHistory};
use crate::text::{
    build_vocab, compute_max_tokens, load_embedding_file, synthetic_embeddings, tokenize_with, EmbeddingTable,
    LengthStats, TextPipeline,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Phase1Summary {
    pub n_posts: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub skipped: usize,
    pub vocab_size: usize,
    pub lengths: LengthStats,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct Phase1Output {
    pub predictor: SentimentPredictor,
    pub history: TrainHistory,
    pub summary: Phase1Summary,
}

/// Distinct tokens in first-appearance order.
fn corpus_tokens(docs: &[Vec<String>]) -> Vec<String> {
    let mut seen = HashSet::new();
    docs.iter().flatten().filter(|t| seen.insert(t.as_str())).cloned().collect()
}

fn embedding_table(cfg: &ExperimentConfig, docs: &[Vec<String>]) -> Result<(EmbeddingTable, Vec<String>)> {
    match &cfg.text.embedding_file {
        Some(path) => load_embedding_file(path),
        None => {
            let tokens = corpus_tokens(docs);
            let table =
                synthetic_embeddings(&tokens, cfg.text.embedding_dim, rng::sub_seed(cfg.seed, "text.embedding"));
            Ok((table, tokens))
        }
    }
}

/// Labels each post with its trading day's movement, splits the labelled
/// posts, trains, and scores the held-out share.
pub fn run_phase1(cfg: &ExperimentConfig, data: &PeriodData) -> Result<Phase1Output> {
    let tokenizer = cfg.text.tokenizer;
    let docs: Vec<Vec<String>> = data.posts.iter().map(|p| tokenize_with(&p.text, &tokenizer)).collect();
    let (table, table_tokens) = embedding_table(cfg, &docs)?;
    let vocab = build_vocab(&docs, &table_tokens)?;
    let lengths = compute_max_tokens(&docs.iter().map(Vec::len).collect::<Vec<_>>())?;
    let text = TextPipeline { tokenizer, vocab, max_tokens: lengths.max_tokens };

    let zeros = vec![0.0; data.posts.len()];
    let assembled = assemble_rows(&data.posts, &zeros, &data.bars)?;
    if assembled.rows.len() < 2 {
        return Err(Error::domain("phase 1 needs at least two labelled posts"));
    }
    let seqs: Vec<_> = assembled.source.iter().map(|&i| text.prepare(&data.posts[i].text)).collect();
    let labels: Vec<u8> = assembled.rows.iter().map(|r| r.label).collect();
    let spec = SplitSpec::holdout(cfg.sentiment.train_fraction, rng::sub_seed(cfg.seed, "phase1.split"));
    let (train_idx, test_idx) = split_indices(seqs.len(), &spec)?;
    if test_idx.is_empty() {
        return Err(Error::domain("phase 1 held-out split is empty"));
    }
    let pick = |idx: &[usize]| -> (Vec<_>, Vec<u8>) {
        (idx.iter().map(|&i| seqs[i].clone()).collect(), idx.iter().map(|&i| labels[i]).collect())
    };
    let (train_x, train_y) = pick(&train_idx);
    let (test_x, test_y) = pick(&test_idx);

    let run = cfg.sentiment.train_run(rng::sub_seed(cfg.seed, "phase1.train"));
    let (model, history) =
        train_sentiment(&cfg.sentiment.model_config(), &table, text.max_tokens, &train_x, &train_y, &run)?;
    let probs = model.model_forward(&test_x)?;
    let correct = probs.iter().zip(&test_y).filter(|(&p, &y)| (p >= 0.5) == (y == 1)).count();
    let summary = Phase1Summary {
        n_posts: data.posts.len(),
        n_train: train_x.len(),
        n_test: test_x.len(),
        skipped: assembled.skipped,
        vocab_size: text.vocab.size(),
        lengths,
        train_accuracy: history.epochs.last().map_or(0.0, |e| e.accuracy),
        test_accuracy: correct as f64 / test_y.len() as f64,
    };
    log::info!("phase 1: held-out accuracy {:.4} on {} posts", summary.test_accuracy, summary.n_test);
    Ok(Phase1Output { predictor: SentimentPredictor { model, text }, history, summary })
}
