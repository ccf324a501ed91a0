//! Mini-batch training loop, inference helpers and the model file.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{SentimentConfig, SentimentModel};
use super::optim::{adam_step, AdamHyper, AdamMoments};
use crate::error::{Error, Result};
use crate::rng;
use crate::text::{EmbeddingTable, TextPipeline, TokenSequence, TokenizerKind, Vocabulary};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainRun {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub seed: u64,
}

impl Default for TrainRun {
    fn default() -> Self {
        TrainRun { epochs: 10, batch_size: 32, adam: AdamHyper::default(), seed: 0 }
    }
}

impl TrainRun {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::domain("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::domain("batch size must be >= 1"));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::domain("learning rate must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub warnings: Vec<String>,
}

/// Trains a freshly initialised model. Initialization and shuffling draw from
/// separate streams of `run.seed`, so the result is a pure function of inputs.
/// Loss and accuracy per epoch are accumulated over the mini-batches as seen.
pub fn train_sentiment(
    config: &SentimentConfig,
    embedding: &EmbeddingTable,
    max_tokens: usize,
    seqs: &[TokenSequence],
    labels: &[u8],
    run: &TrainRun,
) -> Result<(SentimentModel, TrainHistory)> {
    run.validate()?;
    if seqs.is_empty() || seqs.len() != labels.len() {
        return Err(Error::domain("training data must be non-empty and aligned"));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::domain("labels must be 0 or 1"));
    }
    let mut history = TrainHistory::default();
    if labels.iter().all(|&y| y == labels[0]) {
        let msg = format!("training labels are all {}; the model can only learn a constant", labels[0]);
        log::warn!("{msg}");
        history.warnings.push(msg);
    }
    let mut model =
        SentimentModel::new(config.clone(), embedding.clone(), max_tokens, rng::sub_seed(run.seed, "seqnn.init"))?;
    let mut shuffle = rng::stream(run.seed, "seqnn.shuffle");
    let dim = model.embedding.dim;
    let n_weights = model.weights.n_params();
    let n_emb = if config.train_embeddings { model.embedding.data.len() - dim } else { 0 };
    let mut moments = AdamMoments::zeros(n_weights + n_emb);
    let mut params = model.weights.to_flat();
    params.extend_from_slice(&model.embedding.data[dim..dim + n_emb]);

    let mut order: Vec<usize> = (0..seqs.len()).collect();
    for epoch in 1..=run.epochs {
        order.shuffle(&mut shuffle);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(run.batch_size) {
            let batch: Vec<TokenSequence> = chunk.iter().map(|&i| seqs[i].clone()).collect();
            let ys: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, probs, grads) = model.backward_with_probs(&batch, &ys)?;
            loss_sum += loss * chunk.len() as f64;
            correct += probs.iter().zip(&ys).filter(|(&p, &y)| (p >= 0.5) == (y == 1)).count();
            let mut flat = grads.weights.to_flat();
            if let Some(e) = grads.embedding {
                flat.extend_from_slice(&e[dim..]);
            }
            adam_step(&mut params, &mut flat, &mut moments, &run.adam);
            model.weights.set_flat(&params[..n_weights]);
            if n_emb > 0 {
                model.embedding.data[dim..].copy_from_slice(&params[n_weights..]);
            }
        }
        let n = seqs.len() as f64;
        let stats = EpochStats { epoch, loss: loss_sum / n, accuracy: correct as f64 / n };
        if !stats.loss.is_finite() {
            return Err(Error::Numerical(format!("training loss diverged at epoch {epoch}")));
        }
        log::debug!("epoch {epoch}: loss {:.6} acc {:.4}", stats.loss, stats.accuracy);
        history.epochs.push(stats);
    }
    Ok((model, history))
}

/// A trained model together with the text pipeline it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct SentimentPredictor {
    pub model: SentimentModel,
    pub text: TextPipeline,
}

impl SentimentPredictor {
    pub fn score(&self, texts: &[String]) -> Result<Vec<f64>> {
        predict_sentiment(&self.model, texts, &self.text)
    }
}

pub fn predict_sentiment(model: &SentimentModel, texts: &[String], text: &TextPipeline) -> Result<Vec<f64>> {
    if text.max_tokens != model.max_tokens {
        return Err(Error::domain("text pipeline and model disagree on max_tokens"));
    }
    let seqs: Vec<TokenSequence> = texts.iter().map(|t| text.prepare(t)).collect();
    model.model_forward(&seqs)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SentimentFile {
    format_version: u32,
    kind: String,
    config: SentimentConfig,
    max_tokens: usize,
    tokenizer: TokenizerKind,
    vocabulary_hash: String,
    vocabulary: Vocabulary,
    embedding: NamedTensor,
    parameters: Vec<NamedTensor>,
}

impl SentimentPredictor {
    pub fn to_json(&self) -> Result<String> {
        let m = &self.model;
        let file = SentimentFile {
            format_version: MODEL_FORMAT_VERSION,
            kind: "sentiment".into(),
            config: m.config.clone(),
            max_tokens: m.max_tokens,
            tokenizer: self.text.tokenizer,
            vocabulary_hash: self.text.vocab.hash(),
            vocabulary: self.text.vocab.clone(),
            embedding: NamedTensor {
                name: "embedding".into(),
                shape: vec![m.embedding.size(), m.embedding.dim],
                data: m.embedding.data.clone(),
            },
            parameters: m
                .weights
                .tensors()
                .into_iter()
                .map(|(name, shape, data)| NamedTensor { name, shape, data: data.to_vec() })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: SentimentFile = serde_json::from_str(s)?;
        if f.format_version != MODEL_FORMAT_VERSION || f.kind != "sentiment" {
            return Err(Error::Config(format!(
                "unsupported model file (kind {}, version {})",
                f.kind, f.format_version
            )));
        }
        if f.vocabulary.hash() != f.vocabulary_hash {
            return Err(Error::Config("vocabulary hash mismatch".into()));
        }
        let [size, dim] = f.embedding.shape[..] else {
            return Err(Error::Config("embedding shape must be [rows, dim]".into()));
        };
        if size * dim != f.embedding.data.len() || size != f.vocabulary.size() {
            return Err(Error::Config("embedding shape inconsistent with data or vocabulary".into()));
        }
        let embedding = EmbeddingTable { dim, data: f.embedding.data };
        let mut model = SentimentModel::new(f.config, embedding, f.max_tokens, 0)?;
        let expected: Vec<(String, Vec<usize>)> = model.weights.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        if expected.len() != f.parameters.len() {
            return Err(Error::Config("parameter count does not match config".into()));
        }
        for ((dst, (name, shape)), t) in model.weights.tensors_mut().into_iter().zip(expected).zip(f.parameters) {
            if t.name != name || t.shape != shape || t.data.len() != dst.len() {
                return Err(Error::Config(format!("parameter {} does not match expected {name} {shape:?}", t.name)));
            }
            *dst = t.data;
        }
        model.validate()?;
        let text = TextPipeline { tokenizer: f.tokenizer, vocab: f.vocabulary, max_tokens: f.max_tokens };
        Ok(SentimentPredictor { model, text })
    }
}

pub fn save_sentiment_file(path: &Path, p: &SentimentPredictor) -> Result<()> {
    std::fs::write(path, p.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_sentiment_file(path: &Path) -> Result<SentimentPredictor> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SentimentPredictor::from_json(&s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{build_vocab, synthetic_embeddings};

    fn setup() -> (SentimentConfig, EmbeddingTable, TextPipeline) {
        let toks: Vec<String> = ["good", "bad", "x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let emb = synthetic_embeddings(&toks, 4, 2);
        let vocab = build_vocab(&[], &toks).unwrap();
        let text = TextPipeline { tokenizer: TokenizerKind::Whitespace, vocab, max_tokens: 4 };
        let cfg = SentimentConfig { hidden: vec![6, 3], heads: 2, attention_out: None, train_embeddings: false };
        (cfg, emb, text)
    }

    fn corpus(text: &TextPipeline) -> (Vec<TokenSequence>, Vec<u8>) {
        let raw = ["good x y", "bad y z", "x good", "z bad", "good good", "bad bad x", "y x good", "z bad y"];
        let seqs = raw.iter().map(|t| text.prepare(t)).collect();
        let labels = raw.iter().map(|t| t.contains("good") as u8).collect();
        (seqs, labels)
    }

    #[test]
    fn zero_epochs_rejected() {
        let (cfg, emb, text) = setup();
        let (s, y) = corpus(&text);
        let run = TrainRun { epochs: 0, ..TrainRun::default() };
        assert!(matches!(train_sentiment(&cfg, &emb, 4, &s, &y, &run), Err(Error::Domain(_))));
    }

    #[test]
    fn deterministic_and_learns() {
        let (cfg, emb, text) = setup();
        let (s, y) = corpus(&text);
        let run = TrainRun {
            epochs: 60,
            batch_size: 4,
            adam: AdamHyper { learning_rate: 1e-2, ..AdamHyper::default() },
            seed: 9,
        };
        let (m1, h1) = train_sentiment(&cfg, &emb, 4, &s, &y, &run).unwrap();
        let (m2, h2) = train_sentiment(&cfg, &emb, 4, &s, &y, &run).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(h1, h2);
        assert_eq!(h1.epochs.len(), 60);
        assert!(h1.epochs.last().unwrap().loss < h1.epochs[0].loss);
        assert_eq!(h1.epochs.last().unwrap().accuracy, 1.0);
    }

    #[test]
    fn single_class_warns() {
        let (cfg, emb, text) = setup();
        let (s, _) = corpus(&text);
        let run = TrainRun { epochs: 1, ..TrainRun::default() };
        let (_, h) = train_sentiment(&cfg, &emb, 4, &s, &vec![1; s.len()], &run).unwrap();
        assert_eq!(h.warnings.len(), 1);
    }

    #[test]
    fn trainable_embeddings_keep_pad() {
        let (mut cfg, emb, text) = setup();
        cfg.train_embeddings = true;
        let (s, y) = corpus(&text);
        let run = TrainRun { epochs: 2, batch_size: 3, ..TrainRun::default() };
        let (m, _) = train_sentiment(&cfg, &emb, 4, &s, &y, &run).unwrap();
        assert!(m.embedding.row(0).iter().all(|&x| x == 0.0));
        assert_ne!(m.embedding.data, emb.data);
    }

    #[test]
    fn predictor_scores_and_reloads_exactly() {
        let (cfg, emb, text) = setup();
        let model = SentimentModel::new(cfg, emb, 4, 5).unwrap();
        let p = SentimentPredictor { model, text };
        let texts: Vec<String> =
            ["good x", "good x", "", "unknown words only here"].iter().map(|s| s.to_string()).collect();
        let a = p.score(&texts).unwrap();
        assert_eq!(a[0], a[1]);
        assert!(a.iter().all(|&v| v > 0.0 && v < 1.0));
        let back = SentimentPredictor::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.score(&texts).unwrap(), a);

        let mut zero = p.clone();
        zero.model.weights.dense_w.iter_mut().for_each(|w| *w = 0.0);
        assert_eq!(zero.score(&texts).unwrap(), vec![0.5; 4]);
    }

    #[test]
    fn corrupted_file_rejected() {
        let (cfg, emb, text) = setup();
        let p = SentimentPredictor { model: SentimentModel::new(cfg, emb, 4, 5).unwrap(), text };
        let json = p.to_json().unwrap().replace("\"dense.b\"", "\"dense.c\"");
        assert!(SentimentPredictor::from_json(&json).is_err());
    }
}
