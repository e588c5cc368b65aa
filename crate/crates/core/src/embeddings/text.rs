use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::nn::seeded_rng;

pub const TOKEN_DIM: usize = 13;

pub const VOCAB: [&str; 13] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "red", "green",
    "blue",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum TableSource {
    Synthetic { seed: u64 },
    File { path: String },
}

/// Token to fixed-width vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTable {
    dim: usize,
    source: TableSource,
    rows: IndexMap<String, Vec<f64>>,
}

impl TokenTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> &TableSource {
        &self.source
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.rows.get(token).map(Vec::as_slice)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    /// Reads `token v1 v2 ...` lines. Blank lines and `#` comments are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        let mut rows = IndexMap::new();
        let mut dim = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().expect("non-empty line").to_lowercase();
            let values = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!(
                    "{}:{}: expected finite floats after `{token}`",
                    path.display(),
                    lineno + 1
                )));
            }
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::Format(format!(
                        "{}:{}: `{token}` has {} values, earlier rows have {d}",
                        path.display(),
                        lineno + 1,
                        values.len()
                    )))
                }
                _ => {}
            }
            rows.insert(token, values);
        }
        let dim = dim.ok_or_else(|| Error::Format(format!("{} is empty", path.display())))?;
        Ok(Self {
            dim,
            source: TableSource::File {
                path: path.display().to_string(),
            },
            rows,
        })
    }
}

/// Seeded unit-norm Gaussian directions, one per token.
pub fn synth_token_table(vocab: &[&str], dim: usize, seed: u64) -> TokenTable {
    assert!(!vocab.is_empty() && dim > 0, "empty vocabulary or width");
    let mut rng = seeded_rng(seed);
    let mut rows = IndexMap::new();
    for token in vocab {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        rows.insert(token.to_string(), v);
    }
    TokenTable {
        dim,
        source: TableSource::Synthetic { seed },
        rows,
    }
}

/// Concatenates the rows of `tokens` in order.
pub fn embed_text<S: AsRef<str>>(tokens: &[S], table: &TokenTable) -> Result<Vec<f64>> {
    let unknown: Vec<String> = tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| table.get(t).is_none())
        .map(String::from)
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownTokens(unknown));
    }
    if tokens.is_empty() {
        return Err(Error::InvalidInput("no tokens to embed".into()));
    }
    Ok(tokens
        .iter()
        .flat_map(|t| table.get(t.as_ref()).expect("checked").iter().copied())
        .collect())
}
