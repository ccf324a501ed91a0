//! Price bars, blog posts, movement labels and the feature-row table.
//!
//! A [`FeatureRow`] is one post joined with the bar of the trading day it is
//! actionable on. Its label is the sign of the next trading day's close-to-close
//! return, with a zero return counted as "not raised".

mod io;
mod synth;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use io::{read_posts, read_prices, read_rows, write_posts, write_prices, write_rows};
pub use synth::{generate_synthetic, Period, SynthConfig, SynthCorpus, VocabSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl PriceBar {
    pub fn validate(&self) -> Result<()> {
        let ok = self.low > 0.0
            && self.low <= self.open
            && self.open <= self.high
            && self.low <= self.close
            && self.close <= self.high;
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("bar {} violates low <= open/close <= high with low > 0", self.date)))
        }
    }
}

/// Checks every bar and that dates are strictly increasing.
pub fn validate_series(bars: &[PriceBar]) -> Result<()> {
    for bar in bars {
        bar.validate()?;
    }
    for w in bars.windows(2) {
        if w[1].date <= w[0].date {
            return Err(Error::domain(format!("bar dates not strictly increasing at {}", w[1].date)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlogPost {
    pub date: NaiveDate,
    pub text: String,
    pub thumbs: u64,
    pub comments: u64,
    pub forwards: u64,
}

impl BlogPost {
    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::domain(format!("post on {} has empty text", self.date)));
        }
        Ok(())
    }
}

/// Names of the phase-2 model inputs, in [`FeatureRow::features`] order.
pub const FEATURE_NAMES: [&str; 7] = ["sentiment", "thumbs", "comments", "forwards", "high", "low", "open"];
pub const N_FEATURES: usize = FEATURE_NAMES.len();

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub sentiment: f64,
    pub thumbs: u64,
    pub comments: u64,
    pub forwards: u64,
    pub high: f64,
    pub low: f64,
    pub open: f64,
    pub label: u8,
}

impl FeatureRow {
    pub fn features(&self) -> [f64; N_FEATURES] {
        [self.sentiment, self.thumbs as f64, self.comments as f64, self.forwards as f64, self.high, self.low, self.open]
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sentiment) {
            return Err(Error::domain(format!("sentiment {} outside [0,1]", self.sentiment)));
        }
        if self.label > 1 {
            return Err(Error::domain(format!("label {} is not binary", self.label)));
        }
        if !(self.low <= self.high) {
            return Err(Error::domain("row has low > high"));
        }
        Ok(())
    }
}

pub fn compute_return(p_t: f64, p_next: f64) -> Result<f64> {
    if !(p_t > 0.0) {
        return Err(Error::domain(format!("price must be positive, got {p_t}")));
    }
    Ok((p_next - p_t) / p_t)
}

/// 1 iff the return is strictly positive.
pub fn compute_label(p_t: f64, p_next: f64) -> Result<u8> {
    Ok(u8::from(compute_return(p_t, p_next)? > 0.0))
}

/// Output of [`assemble_rows`].
#[derive(Debug, Clone, Default)]
pub struct Assembly {
    pub rows: Vec<FeatureRow>,
    /// Trading day each row was mapped onto.
    pub days: Vec<NaiveDate>,
    /// Index of the originating post.
    pub source: Vec<usize>,
    /// Posts with no trading day on/after their date, or no following bar.
    pub skipped: usize,
}

/// Joins each post with the bar of the first trading day on or after the post
/// date; posts without such a day or without a following bar are skipped.
pub fn assemble_rows(posts: &[BlogPost], sentiments: &[f64], bars: &[PriceBar]) -> Result<Assembly> {
    if posts.len() != sentiments.len() {
        return Err(Error::domain(format!("{} posts but {} sentiment scores", posts.len(), sentiments.len())));
    }
    validate_series(bars)?;
    let mut out = Assembly::default();
    for (i, (post, &sentiment)) in posts.iter().zip(sentiments).enumerate() {
        let day = bars.partition_point(|b| b.date < post.date);
        if day + 1 >= bars.len() {
            out.skipped += 1;
            continue;
        }
        let bar = &bars[day];
        let label = compute_label(bar.close, bars[day + 1].close)?;
        let row = FeatureRow {
            sentiment,
            thumbs: post.thumbs,
            comments: post.comments,
            forwards: post.forwards,
            high: bar.high,
            low: bar.low,
            open: bar.open,
            label,
        };
        row.validate()?;
        out.rows.push(row);
        out.days.push(bar.date);
        out.source.push(i);
    }
    if out.skipped > 0 {
        log::warn!("assemble_rows: skipped {} of {} posts without a resolvable trading day", out.skipped, posts.len());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    FractionHoldout,
    FullTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub train_fraction: f64,
    pub shuffle_seed: u64,
}

impl SplitSpec {
    pub fn holdout(train_fraction: f64, shuffle_seed: u64) -> Self {
        SplitSpec { mode: SplitMode::FractionHoldout, train_fraction, shuffle_seed }
    }

    pub fn full_test() -> Self {
        SplitSpec { mode: SplitMode::FullTest, train_fraction: 0.0, shuffle_seed: 0 }
    }

    fn validate(&self) -> Result<()> {
        match self.mode {
            SplitMode::FractionHoldout if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) => {
                Err(Error::domain(format!("holdout train_fraction must be in (0,1), got {}", self.train_fraction)))
            }
            SplitMode::FullTest if self.train_fraction != 0.0 => {
                Err(Error::domain("full-test split must have train_fraction 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Training set size for `n` items, rounded half-up.
pub fn train_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 + 0.5).floor() as usize).min(n)
}

/// Index partition of `0..n`; both halves are returned in ascending order.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::domain("cannot split an empty row set"));
    }
    spec.validate()?;
    if spec.mode == SplitMode::FullTest {
        return Ok((Vec::new(), (0..n).collect()));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::seeded(spec.shuffle_seed));
    let n_train = train_size(n, spec.train_fraction);
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Like [`split_indices`] but keeps every group (e.g. a trading day) on one
/// side; the fraction applies to the number of groups.
pub fn split_grouped_indices<K: Ord + Clone>(groups: &[K], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut keys: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        keys.entry(g.clone()).or_default().push(i);
    }
    let members: Vec<Vec<usize>> = keys.into_values().collect();
    let (train_groups, test_groups) = split_indices(members.len(), spec)?;
    let gather = |gs: &[usize]| {
        let mut v: Vec<usize> = gs.iter().flat_map(|&g| members[g].iter().copied()).collect();
        v.sort_unstable();
        v
    };
    Ok((gather(&train_groups), gather(&test_groups)))
}

pub fn split<T: Clone>(rows: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>)> {
    let (tr, te) = split_indices(rows.len(), spec)?;
    Ok((pick(rows, &tr), pick(rows, &te)))
}

pub fn pick<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn bar(date: &str, open: f64, high: f64, low: f64, close: f64) -> PriceBar {
        PriceBar { date: d(date), open, high, low, close }
    }

    fn post(date: &str, t: u64, c: u64, f: u64) -> BlogPost {
        BlogPost { date: d(date), text: "abc".into(), thumbs: t, comments: c, forwards: f }
    }

    #[test]
    fn returns_and_labels() {
        assert!((compute_return(100.0, 101.0).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(compute_return(100.0, 100.0).unwrap(), 0.0);
        assert_eq!(compute_return(200.0, 150.0).unwrap(), -0.25);
        assert_eq!(compute_label(100.0, 101.0).unwrap(), 1);
        assert_eq!(compute_label(100.0, 100.0).unwrap(), 0);
        assert_eq!(compute_label(100.0, 99.0).unwrap(), 0);
        assert!(matches!(compute_return(0.0, 1.0), Err(Error::Domain(_))));
        assert!(compute_label(-3.0, 1.0).is_err());
    }

    #[test]
    fn assembles_table_one_first_line() {
        let bars = vec![
            bar("2019-03-04", 3386.851, 3408.315, 3327.868, 3400.0),
            bar("2019-03-05", 3390.0, 3410.0, 3380.0, 3395.5),
        ];
        let posts = vec![post("2019-03-04", 258, 78, 112)];
        let a = assemble_rows(&posts, &[0.305082], &bars).unwrap();
        assert_eq!(
            a.rows,
            vec![FeatureRow {
                sentiment: 0.305082,
                thumbs: 258,
                comments: 78,
                forwards: 112,
                high: 3408.315,
                low: 3327.868,
                open: 3386.851,
                label: 0,
            }]
        );
        assert_eq!(a.skipped, 0);
    }

    #[test]
    fn assemble_edge_cases() {
        let bars = vec![
            bar("2019-03-01", 10.0, 11.0, 9.0, 10.0), // Friday
            bar("2019-03-04", 10.0, 12.0, 9.5, 11.0), // Monday
            bar("2019-03-05", 11.0, 12.0, 10.0, 10.5),
        ];
        assert!(assemble_rows(&[], &[], &bars).unwrap().rows.is_empty());

        let posts = vec![post("2019-03-01", 1, 2, 3), post("2019-03-01", 4, 5, 6)];
        let a = assemble_rows(&posts, &[0.1, 0.9], &bars).unwrap();
        assert_eq!(a.rows.len(), 2);
        assert_eq!((a.rows[0].high, a.rows[0].low, a.rows[0].open, a.rows[0].label), (11.0, 9.0, 10.0, 1));
        assert_eq!((a.rows[1].high, a.rows[1].low, a.rows[1].open, a.rows[1].label), (11.0, 9.0, 10.0, 1));

        // Saturday maps forward to Monday; the last bar has no successor.
        let posts = vec![post("2019-03-02", 1, 1, 1), post("2019-03-05", 1, 1, 1), post("2019-03-09", 1, 1, 1)];
        let a = assemble_rows(&posts, &[0.5; 3], &bars).unwrap();
        assert_eq!(a.rows.len(), 1);
        assert_eq!(a.days, vec![d("2019-03-04")]);
        assert_eq!(a.rows[0].label, 0);
        assert_eq!(a.skipped, 2);
        assert_eq!(a.source, vec![0]);

        assert!(assemble_rows(&posts, &[0.5], &bars).is_err());
    }

    #[test]
    fn split_examples() {
        let rows: Vec<u32> = (0..10).collect();
        let (tr, te) = split(&rows, &SplitSpec::holdout(0.8, 11)).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert_eq!(split(&rows, &SplitSpec::holdout(0.8, 11)).unwrap(), (tr, te));

        let (tr, te) = split(&rows, &SplitSpec::full_test()).unwrap();
        assert!(tr.is_empty());
        assert_eq!(te, rows);

        assert_eq!(train_size(12_427, 0.9), 11_184);
        let (tr, _) = split_indices(12_427, &SplitSpec::holdout(0.9, 1)).unwrap();
        assert_eq!(tr.len(), 11_184);

        assert!(split::<u32>(&[], &SplitSpec::holdout(0.5, 1)).is_err());
        assert!(split(&rows, &SplitSpec::holdout(1.0, 1)).is_err());
        assert!(split(&rows, &SplitSpec::holdout(0.0, 1)).is_err());
    }

    #[test]
    fn grouped_split_keeps_groups_together() {
        let groups = [0, 0, 1, 1, 1, 2, 3, 3, 4, 4];
        let (tr, te) = split_grouped_indices(&groups, &SplitSpec::holdout(0.6, 3)).unwrap();
        let gt: std::collections::BTreeSet<_> = tr.iter().map(|&i| groups[i]).collect();
        let ge: std::collections::BTreeSet<_> = te.iter().map(|&i| groups[i]).collect();
        assert!(gt.is_disjoint(&ge));
        assert_eq!(gt.len(), 3);
        assert_eq!(tr.len() + te.len(), groups.len());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 1usize..300, frac in 0.01f64..0.99, seed: u64) {
            let (tr, te) = split_indices(n, &SplitSpec::holdout(frac, seed)).unwrap();
            prop_assert_eq!(tr.len(), train_size(n, frac));
            let mut all: Vec<usize> = tr.iter().chain(te.iter()).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn labels_match_brute_force_scan(closes in proptest::collection::vec(1u32..50, 2..40)) {
            let start = d("2020-01-01");
            let bars: Vec<PriceBar> = closes.iter().enumerate().map(|(i, &c)| {
                let c = c as f64;
                PriceBar { date: start + chrono::Days::new(i as u64), open: c, high: c, low: c, close: c }
            }).collect();
            let posts: Vec<BlogPost> = bars.iter().map(|b| BlogPost {
                date: b.date, text: "x".into(), thumbs: 0, comments: 0, forwards: 0,
            }).collect();
            let a = assemble_rows(&posts, &vec![0.5; posts.len()], &bars).unwrap();
            prop_assert_eq!(a.rows.len() + a.skipped, posts.len());
            prop_assert_eq!(a.skipped, 1);
            for (t, row) in a.rows.iter().enumerate() {
                let expect = if closes[t + 1] > closes[t] { 1 } else { 0 };
                prop_assert_eq!(row.label, expect);
            }
        }
    }
}
