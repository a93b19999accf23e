//! Property selection by the Possibility of Categorical Properties (PCP).
//!
//! A predicate whose values concentrate on a few short, recurring
//! expressions ("male", "female", "♂") is a categorical property; one whose
//! values are mostly one-off strings (addresses, dates) is not. PCP scores
//! this as
//!
//! ```text
//! pcp = char_count / (H(values) * H(word-pieces))
//! ```
//!
//! with both entropies in bits and `char_count` the total number of character
//! occurrences across all objects of the predicate.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{PropertyIndex, ValueMultiset};
use crate::wordpiece::for_each_piece;

/// Guard against division by a zero entropy product.
pub const ENTROPY_EPSILON: f64 = 1e-9;

/// Shannon entropy in bits of a frequency distribution.
///
/// Zero counts contribute nothing; an empty or all-zero distribution is a
/// domain error.
pub fn shannon_entropy<I>(counts: I) -> Result<f64>
where
    I: IntoIterator<Item = u64>,
    I::IntoIter: Clone,
{
    let iter = counts.into_iter();
    let total: u64 = iter.clone().sum();
    if total == 0 {
        return Err(Error::domain("entropy of an empty or all-zero distribution"));
    }
    let total = total as f64;
    let h: f64 = iter
        .filter(|&c| c > 0)
        .map(|c| {
            let q = c as f64 / total;
            -q * q.log2()
        })
        .sum();
    Ok(h.max(0.0))
}

/// Every contiguous substring of 1..=`max_len` characters of every value,
/// weighted by the value's frequency.
pub fn wordpiece_distribution(values: &ValueMultiset, max_len: usize) -> HashMap<String, u64> {
    piece_counts(values, max_len)
        .into_iter()
        .map(|(p, c)| (p.to_string(), c))
        .collect()
}

fn piece_counts(values: &ValueMultiset, max_len: usize) -> HashMap<&str, u64> {
    let mut out: HashMap<&str, u64> = HashMap::new();
    for (value, freq) in values.iter() {
        for_each_piece(value, max_len, |_, piece| {
            *out.entry(piece).or_insert(0) += freq;
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyScore {
    pub predicate: String,
    pub value_entropy: f64,
    pub wordpiece_entropy: f64,
    pub char_count: u64,
    /// `+inf` when the entropy product falls below [`ENTROPY_EPSILON`].
    pub pcp: f64,
}

/// Scores one property's value multiset.
pub fn pcp_score(predicate: &str, values: &ValueMultiset, max_len: usize) -> Result<PropertyScore> {
    if values.is_empty() {
        return Err(Error::domain(format!("property `{predicate}` has no values")));
    }
    if max_len == 0 {
        return Err(Error::config("max word-piece length must be >= 1"));
    }
    let value_entropy = shannon_entropy(values.iter().map(|(_, c)| c))?;
    let pieces = piece_counts(values, max_len);
    let wordpiece_entropy = shannon_entropy(pieces.values().copied())?;
    let char_count: u64 = values
        .iter()
        .map(|(v, c)| v.chars().count() as u64 * c)
        .sum();
    let denom = value_entropy * wordpiece_entropy;
    let pcp = if denom < ENTROPY_EPSILON {
        f64::INFINITY
    } else {
        char_count as f64 / denom
    };
    Ok(PropertyScore {
        predicate: predicate.to_string(),
        value_entropy,
        wordpiece_entropy,
        char_count,
        pcp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    #[serde(alias = "highest")]
    HighestPcp,
    #[serde(alias = "lowest")]
    LowestPcp,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "highest" | "highest_pcp" => Ok(Direction::HighestPcp),
            "lowest" | "lowest_pcp" => Ok(Direction::LowestPcp),
            other => Err(Error::config(format!("unknown direction `{other}`"))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::HighestPcp => "highest",
            Direction::LowestPcp => "lowest",
        })
    }
}

/// Scores every property, ordered best-first for `direction`.
pub fn rank_properties(
    index: &PropertyIndex,
    direction: Direction,
    max_len: usize,
) -> Result<Vec<PropertyScore>> {
    let entries: Vec<_> = index.iter().collect();
    let mut scores = entries
        .par_iter()
        .map(|(p, values)| pcp_score(p, values, max_len))
        .collect::<Result<Vec<_>>>()?;
    scores.sort_by(|a, b| {
        let by_score = match direction {
            Direction::HighestPcp => b.pcp.total_cmp(&a.pcp),
            Direction::LowestPcp => a.pcp.total_cmp(&b.pcp),
        };
        by_score.then_with(|| a.predicate.cmp(&b.predicate))
    });
    Ok(scores)
}

/// Top-`k` predicates by PCP; ties are broken lexicographically.
pub fn select_properties(
    index: &PropertyIndex,
    k: usize,
    direction: Direction,
    max_len: usize,
) -> Result<Vec<PropertyScore>> {
    if k == 0 {
        return Err(Error::config("top-k must be >= 1"));
    }
    let mut ranked = rank_properties(index, direction, max_len)?;
    ranked.truncate(k);
    Ok(ranked)
}

/// Writes `predicate pcp value_entropy wordpiece_entropy char_count` rows.
pub fn write_score_tsv<W: Write>(mut w: W, scores: &[PropertyScore]) -> Result<()> {
    writeln!(w, "predicate\tpcp\tvalue_entropy\twordpiece_entropy\tchar_count")?;
    for s in scores {
        writeln!(
            w,
            "{}\t{}\t{:.6}\t{:.6}\t{}",
            s.predicate,
            if s.pcp.is_infinite() { "inf".to_string() } else { format!("{:.6}", s.pcp) },
            s.value_entropy,
            s.wordpiece_entropy,
            s.char_count
        )?;
    }
    Ok(())
}
