//! Two-phase pipeline for sentiment-driven next-day stock movement prediction.
//!
//! Phase 1 turns short financial posts into a sentiment score with a stacked
//! bidirectional GRU and multi-head multiplicative self-attention
//! ([`seqnn`]). Phase 2 combines that score with social-influence counts and
//! daily price features ([`dataset::FeatureRow`]) and fits tree ensembles or
//! a linear SVM ([`tabular`]), selected by grid, random, or Bayesian search
//! over k-fold cross-validation ([`hpo`]). [`eval`] produces per-class
//! reports and before/after comparisons under distribution shift, and
//! [`pipeline`] ties the stages together into one reproducible run.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod hpo;
pub mod pipeline;
pub mod rng;
pub mod seqnn;
pub mod tabular;
pub mod text;

pub use error::{Error, Result};
