//! Seeded synthetic corpus with a controllable distribution-shift knob.
//!
//! Each trading day carries two hidden variables: a *mood* (bullish or
//! bearish, fair coin) and a *crowded* flag (probability `regime_rate`). The
//! next-day movement is `mood XOR crowded`, so the text alone predicts the
//! movement on calm days and predicts its opposite on crowded days. Crowded
//! days are visible only through the engagement counts: post thumbs, comments
//! and forwards are log-normal with a log-mean 3.0 nats higher on crowded
//! days. Labels are then flipped with probability `noise_rate`.
//!
//! Post text is a bag of neutral tokens with `planted_per_post` planted tokens
//! inserted at random positions; each planted token comes from the set that
//! matches the day's mood with probability `(1 + signal_strength) / 2`.
//!
//! Days in the trailing `during_fraction` of the calendar form the "during"
//! period, in which
//! - the calm-day log-mean of every count shifts up by `shift_delta * 3.0`,
//! - the text signal is attenuated to `signal_strength * (1 - shift_delta)`,
//! - each day's movement is replaced by an independent coin with probability
//!   `shift_delta`.
//!
//! With `shift_delta = 0` both periods are drawn from the same distribution;
//! sample means of `ln(1 + thumbs)` then differ by less than four standard
//! errors (the bound the tests use).
//!
//! Closes follow a mean-reverting multiplicative walk whose direction is the
//! label: step size `0.01 * exp(-/+ 5 x)` with `x = ln(close / base_price)`.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BlogPost, PriceBar};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

const CALM_LOG_THUMBS: f64 = 2.995_732_273_553_991; // ln 20
const CROWD_GAP: f64 = 3.0;
const COUNT_SIGMA: f64 = 0.4;
const COMMENT_OFFSET: f64 = -1.2;
const FORWARD_OFFSET: f64 = -0.9;
const STEP: f64 = 0.01;
const REVERSION: f64 = 5.0;
const PUNCT: [&str; 4] = [",", ".", "!", "?"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabSpec {
    pub neutral: Vec<String>,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

impl Default for VocabSpec {
    fn default() -> Self {
        let words = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
        let mut neutral = words(
            "market index shares today sector board volume close open week analyst fund \
             policy bank report quarter trading session investor price futures chart \
             yuan exchange listing",
        );
        neutral.extend((0..16).map(|i| format!("n{i:02}")));
        VocabSpec {
            neutral,
            positive: words("rally surge bullish gain breakout upgrade beat buyback"),
            negative: words("slump plunge bearish loss selloff downgrade miss default"),
        }
    }
}

impl VocabSpec {
    pub fn all_tokens(&self) -> Vec<String> {
        self.neutral.iter().chain(&self.positive).chain(&self.negative).cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_posts: usize,
    /// Trading days carrying posts; one extra bar is generated for the last label.
    pub n_days: usize,
    pub vocab: VocabSpec,
    pub signal_strength: f64,
    pub shift_delta: f64,
    pub noise_rate: f64,
    /// Trailing share of the days that form the "during" period.
    pub during_fraction: f64,
    /// Probability that a day is crowded (mood-movement relation inverted).
    pub regime_rate: f64,
    pub planted_per_post: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub start_date: NaiveDate,
    pub base_price: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_posts: 2000,
            n_days: 400,
            vocab: VocabSpec::default(),
            signal_strength: 0.9,
            shift_delta: 0.5,
            noise_rate: 0.02,
            during_fraction: 0.0,
            regime_rate: 0.25,
            planted_per_post: 5,
            min_words: 6,
            max_words: 16,
            start_date: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
            base_price: 3200.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::config(format!("synthetic: {m}")));
        if self.n_days == 0 || self.n_posts < self.n_days {
            return fail("need n_posts >= n_days >= 1");
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return fail("signal_strength must be in [0,1]");
        }
        if !(self.shift_delta >= 0.0) {
            return fail("shift_delta must be >= 0");
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return fail("noise_rate must be in [0,1)");
        }
        if !(0.0..1.0).contains(&self.during_fraction) {
            return fail("during_fraction must be in [0,1)");
        }
        if !(0.0..=1.0).contains(&self.regime_rate) {
            return fail("regime_rate must be in [0,1]");
        }
        if self.min_words > self.max_words || self.max_words + self.planted_per_post == 0 {
            return fail("need min_words <= max_words and non-empty posts");
        }
        if !(self.base_price > 0.0) {
            return fail("base_price must be positive");
        }
        let v = &self.vocab;
        if v.neutral.is_empty() || (self.planted_per_post > 0 && (v.positive.is_empty() || v.negative.is_empty())) {
            return fail("vocabulary subsets must be non-empty");
        }
        if v.positive.iter().any(|t| v.negative.contains(t)) {
            return fail("positive and negative token sets must be disjoint");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Before,
    During,
}

impl Period {
    pub fn name(self) -> &'static str {
        match self {
            Period::Before => "before",
            Period::During => "during",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub posts: Vec<BlogPost>,
    pub bars: Vec<PriceBar>,
    pub periods: Vec<Period>,
    /// Index into `bars` of the trading day each post belongs to.
    pub days: Vec<usize>,
    /// First trading-day index of the "during" period (`n_days` if none).
    pub during_start: usize,
}

impl SynthCorpus {
    pub fn period_posts(&self, period: Period) -> Vec<BlogPost> {
        self.posts.iter().zip(&self.periods).filter(|(_, &p)| p == period).map(|(post, _)| post.clone()).collect()
    }

    /// Bars needed to label the period's posts, including the following bar.
    pub fn period_bars(&self, period: Period) -> Vec<PriceBar> {
        match period {
            Period::Before => self.bars[..=self.during_start.min(self.bars.len() - 1)].to_vec(),
            Period::During => self.bars[self.during_start.min(self.bars.len() - 1)..].to_vec(),
        }
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

struct DayState {
    mood: bool,
    crowded: bool,
    label: bool,
    period: Period,
}

pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = rng::seeded(seed);
    let n_during = ((cfg.during_fraction * cfg.n_days as f64) + 0.5).floor() as usize;
    let during_start = cfg.n_days - n_during.min(cfg.n_days);

    let days: Vec<DayState> = (0..cfg.n_days)
        .map(|d| {
            let period = if d < during_start { Period::Before } else { Period::During };
            let mood = rng.gen_bool(0.5);
            let crowded = rng.gen_bool(cfg.regime_rate);
            let mut label = mood ^ crowded;
            if period == Period::During && rng.gen_bool(cfg.shift_delta.min(1.0)) {
                label = rng.gen_bool(0.5);
            }
            if rng.gen_bool(cfg.noise_rate) {
                label = !label;
            }
            DayState { mood, crowded, label, period }
        })
        .collect();

    let bars = generate_bars(cfg, &days, &mut rng);

    // At least one post per day, the remainder spread uniformly.
    let mut post_days: Vec<usize> = (0..cfg.n_days).collect();
    post_days.extend((cfg.n_days..cfg.n_posts).map(|_| rng.gen_range(0..cfg.n_days)));
    post_days.sort_unstable();

    let normal = Normal::new(0.0, COUNT_SIGMA).expect("finite sigma");
    let mut posts = Vec::with_capacity(cfg.n_posts);
    let mut periods = Vec::with_capacity(cfg.n_posts);
    for &d in &post_days {
        let day = &days[d];
        let trading = bars[d].date;
        let date = if trading.weekday() == Weekday::Mon && rng.gen_bool(0.25) {
            trading - Days::new(rng.gen_range(1..=2))
        } else {
            trading
        };
        let shifted = day.period == Period::During;
        let mut log_mean = CALM_LOG_THUMBS;
        if day.crowded {
            log_mean += CROWD_GAP;
        } else if shifted {
            log_mean += cfg.shift_delta * CROWD_GAP;
        }
        let mut count = |offset: f64| (log_mean + offset + normal.sample(&mut rng)).exp().round() as u64;
        let thumbs = count(0.0);
        let comments = count(COMMENT_OFFSET);
        let forwards = count(FORWARD_OFFSET);
        let signal = if shifted { cfg.signal_strength * (1.0 - cfg.shift_delta).max(0.0) } else { cfg.signal_strength };
        let text = generate_text(cfg, day.mood, signal, &mut rng);
        posts.push(BlogPost { date, text, thumbs, comments, forwards });
        periods.push(day.period);
    }

    Ok(SynthCorpus { posts, bars, periods, days: post_days, during_start })
}

fn generate_bars(cfg: &SynthConfig, days: &[DayState], rng: &mut Rng) -> Vec<PriceBar> {
    let dates = trading_days(cfg.start_date, cfg.n_days + 1);
    let gap = Normal::<f64>::new(0.0, 0.002).expect("finite sigma");
    let wick = Normal::<f64>::new(0.0, 0.004).expect("finite sigma");
    let mut closes = Vec::with_capacity(dates.len());
    let mut close = cfg.base_price;
    closes.push(round3(close));
    for day in days {
        let x = (close / cfg.base_price).ln();
        let prev = round3(close);
        close *= if day.label { (STEP * (-REVERSION * x).exp()).exp() } else { (-STEP * (REVERSION * x).exp()).exp() };
        // Rounding must not erase the direction of the move.
        let mut c = round3(close);
        if day.label && c <= prev {
            c = prev + 0.001;
        } else if !day.label && c >= prev {
            c = prev - 0.001;
        }
        close = c;
        closes.push(c);
    }
    let mut bars = Vec::with_capacity(dates.len());
    let mut prev_close = closes[0];
    for (i, &date) in dates.iter().enumerate() {
        let close = closes[i];
        let open = round3(prev_close * gap.sample(rng).exp());
        let hi = open.max(close);
        let lo = open.min(close);
        let high = round3(hi * wick.sample(rng).abs().exp()).max(hi);
        let low = round3(lo * (-wick.sample(rng).abs()).exp()).min(lo);
        bars.push(PriceBar { date, open, high, low, close });
        prev_close = close;
    }
    bars
}

fn generate_text(cfg: &SynthConfig, mood: bool, signal: f64, rng: &mut Rng) -> String {
    let v = &cfg.vocab;
    let n_words = rng.gen_range(cfg.min_words..=cfg.max_words);
    let mut tokens: Vec<&str> = (0..n_words).map(|_| v.neutral.choose(rng).unwrap().as_str()).collect();
    let p_match = (1.0 + signal) / 2.0;
    for _ in 0..cfg.planted_per_post {
        let matching = rng.gen_bool(p_match);
        let bullish = mood == matching;
        let set = if bullish { &v.positive } else { &v.negative };
        let tok = set.choose(rng).unwrap().as_str();
        let pos = rng.gen_range(0..=tokens.len());
        tokens.insert(pos, tok);
    }
    let mut text = String::new();
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 {
            text.push(' ');
        }
        text.push_str(tok);
        if rng.gen_bool(0.15) {
            text.push_str(PUNCT.choose(rng).unwrap());
        }
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{assemble_rows, validate_series};

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    fn log_thumbs(c: &SynthCorpus, p: Period) -> Vec<f64> {
        c.period_posts(p).iter().map(|x| (1.0 + x.thumbs as f64).ln()).collect()
    }

    #[test]
    fn deterministic_and_valid() {
        let cfg = SynthConfig { n_posts: 300, n_days: 80, during_fraction: 0.25, ..Default::default() };
        let a = generate_synthetic(&cfg, 9).unwrap();
        let b = generate_synthetic(&cfg, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_synthetic(&cfg, 10).unwrap());
        assert_eq!(a.posts.len(), 300);
        assert_eq!(a.bars.len(), 81);
        validate_series(&a.bars).unwrap();
        validate_series(&a.period_bars(Period::Before)).unwrap();
        assert_eq!(a.during_start, 60);
        for p in &a.posts {
            p.validate().unwrap();
        }
        let rows = assemble_rows(&a.posts, &vec![0.5; 300], &a.bars).unwrap();
        assert_eq!(rows.skipped, 0);
        let before = a.period_posts(Period::Before);
        let r = assemble_rows(&before, &vec![0.5; before.len()], &a.period_bars(Period::Before)).unwrap();
        assert_eq!(r.skipped, 0);
        let during = a.period_posts(Period::During);
        let r = assemble_rows(&during, &vec![0.5; during.len()], &a.period_bars(Period::During)).unwrap();
        assert_eq!(r.skipped, 0);
    }

    #[test]
    fn no_shift_periods_match() {
        let cfg =
            SynthConfig { n_posts: 6000, n_days: 1000, during_fraction: 0.5, shift_delta: 0.0, ..Default::default() };
        let c = generate_synthetic(&cfg, 3).unwrap();
        let (m1, v1) = mean_var(&log_thumbs(&c, Period::Before));
        let (m2, v2) = mean_var(&log_thumbs(&c, Period::During));
        let n1 = c.periods.iter().filter(|&&p| p == Period::Before).count() as f64;
        let n2 = c.posts.len() as f64 - n1;
        let se = (v1 / n1 + v2 / n2).sqrt();
        assert!((m1 - m2).abs() < 4.0 * se, "diff {} se {}", m1 - m2, se);

        let shifted = SynthConfig { shift_delta: 0.5, ..cfg };
        let c = generate_synthetic(&shifted, 3).unwrap();
        let (m1, _) = mean_var(&log_thumbs(&c, Period::Before));
        let (m2, _) = mean_var(&log_thumbs(&c, Period::During));
        assert!(m2 - m1 > 0.5);
    }

    fn planted_balance(text: &str, v: &VocabSpec) -> f64 {
        text.split(|c: char| !c.is_alphanumeric())
            .map(|t| {
                if v.positive.iter().any(|p| p == t) {
                    1.0
                } else if v.negative.iter().any(|p| p == t) {
                    -1.0
                } else {
                    0.0
                }
            })
            .sum()
    }

    fn label_correlation(cfg: &SynthConfig, seed: u64) -> (f64, usize) {
        let c = generate_synthetic(cfg, seed).unwrap();
        let rows = assemble_rows(&c.posts, &vec![0.5; c.posts.len()], &c.bars).unwrap();
        let xs: Vec<f64> = c.posts.iter().map(|p| planted_balance(&p.text, &cfg.vocab)).collect();
        let ys: Vec<f64> = rows.rows.iter().map(|r| r.label as f64).collect();
        let (mx, vx) = mean_var(&xs);
        let (my, vy) = mean_var(&ys);
        let n = xs.len() as f64;
        let cov = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n - 1.0);
        (cov / (vx * vy).sqrt(), xs.len())
    }

    #[test]
    fn null_signal_is_uncorrelated() {
        let cfg = SynthConfig {
            n_posts: 8000,
            n_days: 2000,
            signal_strength: 0.0,
            regime_rate: 0.0,
            noise_rate: 0.0,
            ..Default::default()
        };
        let (r, n) = label_correlation(&cfg, 5);
        assert!(r.abs() < 4.0 / (n as f64).sqrt(), "corr {r}");

        let strong = SynthConfig { signal_strength: 0.9, ..cfg };
        let (r, _) = label_correlation(&strong, 5);
        assert!(r > 0.8, "corr {r}");
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = SynthConfig { n_posts: 5, n_days: 10, ..Default::default() };
        assert!(generate_synthetic(&cfg, 1).is_err());
        cfg.n_posts = 10;
        cfg.vocab.negative.push("rally".into());
        assert!(matches!(generate_synthetic(&cfg, 1), Err(Error::Config(_))));
    }
}
