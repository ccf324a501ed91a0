use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::PAD;
use crate::error::{Error, Result};
use crate::rng;

/// Row-major `size x dim` matrix of word vectors; row 0 is PAD, row 1 is UNK.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl EmbeddingTable {
    /// Builds a table from pretrained vectors, synthesising PAD (zero) and
    /// UNK (mean of the pretrained vectors) rows.
    pub fn from_vectors(dim: usize, vectors: &[Vec<f64>]) -> Self {
        let mut data = vec![0.0; (vectors.len() + 2) * dim];
        if !vectors.is_empty() {
            for v in vectors {
                for (acc, x) in data[dim..2 * dim].iter_mut().zip(v) {
                    *acc += x;
                }
            }
            let n = vectors.len() as f64;
            data[dim..2 * dim].iter_mut().for_each(|x| *x /= n);
        }
        for (i, v) in vectors.iter().enumerate() {
            data[(i + 2) * dim..(i + 3) * dim].copy_from_slice(v);
        }
        EmbeddingTable { dim, data }
    }

    pub fn size(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !self.data.len().is_multiple_of(self.dim) || self.size() < 2 {
            return Err(Error::domain("embedding table must have dim > 0 and at least PAD/UNK rows"));
        }
        if self.row(PAD).iter().any(|&x| x != 0.0) {
            return Err(Error::domain("PAD embedding row must be zero"));
        }
        Ok(())
    }
}

fn parse_line(line: &str, lineno: usize, dim: usize) -> Result<(String, Vec<f64>)> {
    let fmt = |msg: String| Error::Format { line: lineno, msg };
    let mut parts = line.split_whitespace();
    let token = parts.next().ok_or_else(|| fmt("empty line".into()))?.to_string();
    let vector = parts
        .map(|p| p.parse::<f64>().map_err(|_| fmt(format!("non-numeric vector entry `{p}`"))))
        .collect::<Result<Vec<f64>>>()?;
    if vector.len() != dim {
        return Err(fmt(format!("expected {dim} vector entries, found {}", vector.len())));
    }
    if vector.iter().any(|x| !x.is_finite()) {
        return Err(fmt("non-finite vector entry".into()));
    }
    Ok((token, vector))
}

/// Parses word2vec text format: a `V D` header line followed by `V` lines of
/// `token v1 .. vD`.
pub fn parse_embedding_text(content: &str) -> Result<(EmbeddingTable, Vec<String>)> {
    let mut lines = content.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or(Error::Format { line: 1, msg: "missing `V D` header".into() })?;
    let hdr: Vec<&str> = header.split_whitespace().collect();
    let parsed = match hdr.as_slice() {
        [v, d] => v.parse::<usize>().ok().zip(d.parse::<usize>().ok()),
        _ => None,
    };
    let (count, dim) = match parsed {
        Some((v, d)) if d > 0 => (v, d),
        _ => return Err(Error::Format { line: 1, msg: format!("bad header `{header}`") }),
    };
    let mut tokens = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    let mut seen = HashSet::with_capacity(count);
    let mut last = 1;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if tokens.len() == count {
            return Err(Error::Format { line: lineno, msg: format!("more than {count} vectors") });
        }
        let (token, vector) = parse_line(line, lineno, dim)?;
        if !seen.insert(token.clone()) {
            return Err(Error::Format { line: lineno, msg: format!("duplicate token `{token}`") });
        }
        tokens.push(token);
        vectors.push(vector);
        last = lineno;
    }
    if tokens.len() != count {
        return Err(Error::Format { line: last + 1, msg: format!("expected {count} vectors, found {}", tokens.len()) });
    }
    Ok((EmbeddingTable::from_vectors(dim, &vectors), tokens))
}

pub fn load_embedding_file(path: &Path) -> Result<(EmbeddingTable, Vec<String>)> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embedding_text(&content)
}

/// Inverse of [`parse_embedding_text`]: writes the pretrained rows only.
pub fn format_embedding_text(table: &EmbeddingTable, tokens: &[String]) -> String {
    let mut out = format!("{} {}\n", tokens.len(), table.dim);
    for (i, tok) in tokens.iter().enumerate() {
        out.push_str(tok);
        for x in table.row(i + 2) {
            write!(out, " {x}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_embedding_file(path: &Path, table: &EmbeddingTable, tokens: &[String]) -> Result<()> {
    std::fs::write(path, format_embedding_text(table, tokens)).map_err(|e| Error::io(path, e))
}

/// Random unit-scale vectors for `tokens`, rounded to 4 decimals so the text
/// form is compact; stands in for a pretrained table.
pub fn synthetic_embeddings(tokens: &[String], dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = rng::seeded(seed);
    let vectors: Vec<Vec<f64>> =
        tokens.iter().map(|_| (0..dim).map(|_| (rng.gen_range(-1.0..1.0f64) * 1e4).round() / 1e4).collect()).collect();
    EmbeddingTable::from_vectors(dim, &vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::UNK;

    #[test]
    fn parses_minimal_file() {
        let (table, tokens) = parse_embedding_text("2 3\na 1 0 0\nb 0 1 0").unwrap();
        assert_eq!(table.size(), 4);
        assert_eq!(table.dim, 3);
        assert_eq!(table.row(PAD), &[0.0, 0.0, 0.0]);
        assert_eq!(table.row(UNK), &[0.5, 0.5, 0.0]);
        assert_eq!(table.row(2), &[1.0, 0.0, 0.0]);
        assert_eq!(tokens, vec!["a", "b"]);
        table.validate().unwrap();
    }

    #[test]
    fn format_errors_name_lines() {
        let line_of = |s: &str| match parse_embedding_text(s) {
            Err(Error::Format { line, .. }) => line,
            other => panic!("expected format error, got {other:?}"),
        };
        assert_eq!(line_of("2 3\na 1 0\nb 0 1 0"), 2);
        assert_eq!(line_of("2 3\na 1 0 0\nb 0 x 0"), 3);
        assert_eq!(line_of("2 3\na 1 0 0\na 0 1 0"), 3);
        assert_eq!(line_of("three 3\n"), 1);
        assert_eq!(line_of("3 3\na 1 0 0\nb 0 1 0"), 4);
    }

    #[test]
    fn empty_table_has_zero_unk() {
        let (table, tokens) = parse_embedding_text("0 4\n").unwrap();
        assert!(tokens.is_empty());
        assert_eq!(table.size(), 2);
        assert_eq!(table.row(UNK), &[0.0; 4]);
    }

    #[test]
    fn synthetic_tables_are_seeded() {
        let toks: Vec<String> = ["x", "y"].iter().map(|s| s.to_string()).collect();
        let a = synthetic_embeddings(&toks, 4, 1);
        assert_eq!(a, synthetic_embeddings(&toks, 4, 1));
        let (b, t) = parse_embedding_text(&format_embedding_text(&a, &toks)).unwrap();
        assert_eq!((a, toks), (b, t));
    }
}
