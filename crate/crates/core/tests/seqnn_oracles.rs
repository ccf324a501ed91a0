//! The sentiment network against its scalar GRU reference and central finite
//! differences.

use alpha_digger::rng;
use alpha_digger::seqnn::check::{finite_difference_check, scalar_gru_cell};
use alpha_digger::seqnn::{gru_cell_forward, GruParams, Matrix, SentimentConfig, SentimentModel};
use alpha_digger::text::synthetic_embeddings;
use rand::Rng;

fn rand_matrix(rows: usize, cols: usize, r: &mut impl Rng) -> Matrix {
    Matrix { rows, cols, data: (0..rows * cols).map(|_| r.gen_range(-0.5..0.5)).collect() }
}

fn rand_vec(n: usize, r: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-0.5..0.5)).collect()
}

#[test]
fn gru_cell_matches_scalar_reference() {
    let mut r = rng::seeded(42);
    for case in 0..100 {
        let hidden = 1 + case % 5;
        let input = 1 + (case / 5) % 4;
        let w = hidden + input;
        let p = GruParams {
            w_r: rand_matrix(hidden, w, &mut r),
            w_z: rand_matrix(hidden, w, &mut r),
            w_h: rand_matrix(hidden, w, &mut r),
            b_r: rand_vec(hidden, &mut r),
            b_z: rand_vec(hidden, &mut r),
            b_h: rand_vec(hidden, &mut r),
        };
        let x = rand_vec(input, &mut r);
        let h = rand_vec(hidden, &mut r);
        let got = gru_cell_forward(&p, &x, &h).unwrap().h;
        let want = scalar_gru_cell(&p, &x, &h);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "case {case}: {a} vs {b}");
        }
    }
}

fn tiny_model(train_embeddings: bool, seed: u64) -> SentimentModel {
    let toks: Vec<String> = (0..18).map(|i| format!("w{i}")).collect();
    let emb = synthetic_embeddings(&toks, 5, seed);
    let cfg = SentimentConfig { hidden: vec![8, 4], heads: 2, attention_out: None, train_embeddings };
    SentimentModel::new(cfg, emb, 6, seed + 1).unwrap()
}

#[test]
fn gradients_match_finite_differences() {
    let batch = vec![vec![0, 0, 2, 5, 7, 11], vec![3, 4, 1, 9, 2, 19], vec![0, 0, 0, 0, 12, 6]];
    for (seed, train_emb) in [(1, false), (2, true), (3, true)] {
        let m = tiny_model(train_emb, seed);
        let worst = finite_difference_check(&m, &batch, &[1, 0, 1]).unwrap();
        assert!(worst < 1e-4, "seed {seed}: max relative error {worst:e}");
    }
}

#[test]
fn reload_preserves_forward_outputs() {
    use alpha_digger::seqnn::SentimentPredictor;
    use alpha_digger::text::{build_vocab, TextPipeline, TokenizerKind};
    let m = tiny_model(false, 4);
    let toks: Vec<String> = (0..18).map(|i| format!("w{i}")).collect();
    let text =
        TextPipeline { tokenizer: TokenizerKind::Whitespace, vocab: build_vocab(&[], &toks).unwrap(), max_tokens: 6 };
    let p = SentimentPredictor { model: m, text };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sentiment.json");
    alpha_digger::seqnn::save_sentiment_file(&path, &p).unwrap();
    let back = alpha_digger::seqnn::load_sentiment_file(&path).unwrap();
    let texts: Vec<String> =
        ["w1 w2 w3", "w17", "nothing known", "w4 w4 w4 w4 w4 w4 w4 w4"].iter().map(|s| s.to_string()).collect();
    let (a, b) = (p.score(&texts).unwrap(), back.score(&texts).unwrap());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-15);
    }
}
