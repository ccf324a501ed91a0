//! Phase-1 sentiment network, its gradients, optimizer and training loop.

mod attention;
pub mod check;
mod gru;
pub mod linalg;
mod model;
mod optim;
mod train;

pub use attention::{attention_forward, attention_weights, AttentionParams};
pub use gru::{bigru_layer_forward, gru_cell_forward, BiGruLayer, GruParams, GruState};
pub use linalg::Matrix;
pub use model::{bce_loss, Gradients, Preset, SentimentConfig, SentimentModel, Weights};
pub use optim::{adam_step, clip_global_norm, global_norm, AdamHyper, AdamMoments};
pub use train::{
    load_sentiment_file, predict_sentiment, save_sentiment_file, train_sentiment, EpochStats, SentimentPredictor,
    TrainHistory, TrainRun, MODEL_FORMAT_VERSION,
};
