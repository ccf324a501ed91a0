//! Per-period corpora, generated or read from a directory of CSV files.

use std::path::Path;

use serde::Serialize;

use super::config::{DataSource, ExperimentConfig};
use crate::dataset::{
    generate_synthetic, read_posts, read_prices, write_posts, write_prices, BlogPost, Period, PriceBar,
};
use crate::error::{Error, Result};
use crate::rng;

/// Subdirectory names, also used as report split names.
pub const PHASE1_DIR: &str = "phase1";

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodData {
    pub posts: Vec<BlogPost>,
    pub bars: Vec<PriceBar>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpora {
    /// Sentiment-training corpus.
    pub phase1: PeriodData,
    /// Pre-shift movement corpus (train and Test1).
    pub before: PeriodData,
    /// Shifted movement corpus (Test2).
    pub during: PeriodData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CorporaSummary {
    pub phase1_posts: usize,
    pub before_posts: usize,
    pub during_posts: usize,
    pub phase1_bars: usize,
    pub before_bars: usize,
    pub during_bars: usize,
}

impl Corpora {
    pub fn summary(&self) -> CorporaSummary {
        CorporaSummary {
            phase1_posts: self.phase1.posts.len(),
            before_posts: self.before.posts.len(),
            during_posts: self.during.posts.len(),
            phase1_bars: self.phase1.bars.len(),
            before_bars: self.before.bars.len(),
            during_bars: self.during.bars.len(),
        }
    }

    fn parts(&self) -> [(&'static str, &PeriodData); 3] {
        [(PHASE1_DIR, &self.phase1), (Period::Before.name(), &self.before), (Period::During.name(), &self.during)]
    }

    /// Writes `<dir>/<period>/posts.csv` and `prices.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, data) in self.parts() {
            let sub = dir.join(name);
            std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            write_posts(&sub.join("posts.csv"), &data.posts)?;
            write_prices(&sub.join("prices.csv"), &data.bars)?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let load = |name: &str| -> Result<PeriodData> {
            let sub = dir.join(name);
            Ok(PeriodData { posts: read_posts(&sub.join("posts.csv"))?, bars: read_prices(&sub.join("prices.csv"))? })
        };
        Ok(Corpora {
            phase1: load(PHASE1_DIR)?,
            before: load(Period::Before.name())?,
            during: load(Period::During.name())?,
        })
    }
}

/// Draws both synthetic corpora from named sub-seeds of the master seed.
pub fn generate_corpora(cfg: &ExperimentConfig) -> Result<Corpora> {
    let p1 = generate_synthetic(&cfg.data.phase1, rng::sub_seed(cfg.seed, "data.phase1"))?;
    let market = generate_synthetic(&cfg.data.market, rng::sub_seed(cfg.seed, "data.market"))?;
    let phase1 = PeriodData { posts: p1.period_posts(Period::Before), bars: p1.period_bars(Period::Before) };
    let before = PeriodData { posts: market.period_posts(Period::Before), bars: market.period_bars(Period::Before) };
    let during = PeriodData { posts: market.period_posts(Period::During), bars: market.period_bars(Period::During) };
    Ok(Corpora { phase1, before, during })
}

pub fn load_corpora(cfg: &ExperimentConfig) -> Result<Corpora> {
    match (cfg.data.source, &cfg.data.dir) {
        (DataSource::Synthetic, _) => generate_corpora(cfg),
        (DataSource::Files, Some(dir)) => Corpora::read(dir),
        (DataSource::Files, None) => Err(Error::config("data.source = files needs data.dir")),
    }
}
