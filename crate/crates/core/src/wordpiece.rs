//! Per-property word-piece statistics.
//!
//! A word-piece is any contiguous substring of a value (measured in Unicode
//! scalar values). The table keeps, for every piece up to `max_len`
//! characters, its frequency over the property's values and the histograms
//! of characters seen immediately to its left and right. Those feed PMI
//! cohesion and left/right neighbour entropy.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ValueMultiset;
use crate::selection::shannon_entropy;

/// Calls `f(start, piece)` for every substring of 1..=`max_len` chars of
/// `value`, where `start` is the piece's char offset.
pub fn for_each_piece<'a, F>(value: &'a str, max_len: usize, mut f: F)
where
    F: FnMut(usize, &'a str),
{
    let bounds: Vec<usize> = value
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(value.len()))
        .collect();
    let n = bounds.len() - 1;
    for start in 0..n {
        for len in 1..=max_len.min(n - start) {
            f(start, &value[bounds[start]..bounds[start + len]]);
        }
    }
}

/// The distinct pieces of `value`, sorted.
pub fn piece_set(value: &str, max_len: usize) -> Vec<String> {
    let mut out = Vec::new();
    for_each_piece(value, max_len, |_, p| out.push(p.to_string()));
    out.sort();
    out.dedup();
    out
}

/// A character adjacent to a piece occurrence, or the value boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Neighbor {
    Boundary,
    Char(char),
}

impl fmt::Display for Neighbor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Neighbor::Boundary => f.write_str("⟂"),
            Neighbor::Char(c) => write!(f, "{c}"),
        }
    }
}

/// How piece probabilities are normalized for PMI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmiNormalization {
    /// `p(w)` is relative to the total frequency of pieces with `w`'s length.
    #[default]
    LengthClass,
    /// `p(w)` is relative to the total frequency of all pieces.
    AllPieces,
}

impl FromStr for PmiNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "length-class" | "length_class" => Ok(Self::LengthClass),
            "all" | "all-pieces" | "all_pieces" => Ok(Self::AllPieces),
            other => Err(Error::config(format!("unknown PMI normalization `{other}`"))),
        }
    }
}

/// How left and right neighbour entropies are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrEntMode {
    #[default]
    Min,
    Avg,
}

impl FromStr for LrEntMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Self::Min),
            "avg" | "mean" => Ok(Self::Avg),
            other => Err(Error::config(format!("unknown lr-entropy mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsOptions {
    pub pmi_norm: PmiNormalization,
    pub lrent_mode: LrEntMode,
}

type NeighborHist = HashMap<Neighbor, u64>;

#[derive(Debug, Clone)]
pub struct WordPieceTable {
    property: String,
    max_len: usize,
    options: StatsOptions,
    piece_freq: HashMap<String, u64>,
    left: HashMap<String, NeighborHist>,
    right: HashMap<String, NeighborHist>,
    /// Summed piece frequency per piece length (index 0 unused).
    length_totals: Vec<u64>,
    total_char_occurrences: u64,
}

/// Builds the table with default [`StatsOptions`].
pub fn build_table(property: &str, values: &ValueMultiset, max_len: usize) -> Result<WordPieceTable> {
    build_table_with(property, values, max_len, StatsOptions::default())
}

pub fn build_table_with(
    property: &str,
    values: &ValueMultiset,
    max_len: usize,
    options: StatsOptions,
) -> Result<WordPieceTable> {
    if max_len == 0 {
        return Err(Error::config("max word-piece length must be >= 1"));
    }
    let mut table = WordPieceTable {
        property: property.to_string(),
        max_len,
        options,
        piece_freq: HashMap::new(),
        left: HashMap::new(),
        right: HashMap::new(),
        length_totals: vec![0; max_len + 1],
        total_char_occurrences: 0,
    };
    for (value, freq) in values.iter() {
        let chars: Vec<char> = value.chars().collect();
        table.total_char_occurrences += chars.len() as u64 * freq;
        for_each_piece(value, max_len, |start, piece| {
            let len = piece.chars().count();
            let left = start
                .checked_sub(1)
                .map_or(Neighbor::Boundary, |i| Neighbor::Char(chars[i]));
            let right = chars
                .get(start + len)
                .map_or(Neighbor::Boundary, |&c| Neighbor::Char(c));
            *table.piece_freq.entry(piece.to_string()).or_insert(0) += freq;
            *table
                .left
                .entry(piece.to_string())
                .or_default()
                .entry(left)
                .or_insert(0) += freq;
            *table
                .right
                .entry(piece.to_string())
                .or_default()
                .entry(right)
                .or_insert(0) += freq;
            table.length_totals[len] += freq;
        });
    }
    Ok(table)
}

impl WordPieceTable {
    pub fn property(&self) -> &str {
        &self.property
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn options(&self) -> StatsOptions {
        self.options
    }

    /// Frequency of a piece, 0 if unseen.
    pub fn freq(&self, piece: &str) -> u64 {
        self.piece_freq.get(piece).copied().unwrap_or(0)
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.piece_freq.contains_key(piece)
    }

    pub fn piece_freq(&self) -> &HashMap<String, u64> {
        &self.piece_freq
    }

    pub fn left_neighbors(&self, piece: &str) -> Option<&HashMap<Neighbor, u64>> {
        self.left.get(piece)
    }

    pub fn right_neighbors(&self, piece: &str) -> Option<&HashMap<Neighbor, u64>> {
        self.right.get(piece)
    }

    pub fn total_char_occurrences(&self) -> u64 {
        self.total_char_occurrences
    }

    fn probability(&self, piece: &str) -> Result<f64> {
        let f = self.freq(piece);
        if f == 0 {
            return Err(Error::domain(format!(
                "word-piece `{piece}` not in table for `{}`",
                self.property
            )));
        }
        let total = match self.options.pmi_norm {
            PmiNormalization::LengthClass => self.length_totals[piece.chars().count()],
            PmiNormalization::AllPieces => self.length_totals.iter().sum(),
        };
        Ok(f as f64 / total as f64)
    }

    /// `log2(p(xy) / (p(x) p(y)))`.
    pub fn pmi(&self, x: &str, y: &str) -> Result<f64> {
        let xy = format!("{x}{y}");
        let pxy = self.probability(&xy)?;
        let px = self.probability(x)?;
        let py = self.probability(y)?;
        Ok((pxy / (px * py)).log2())
    }

    /// Entropy of the left and right neighbour histograms of `piece`.
    pub fn neighbor_entropies(&self, piece: &str) -> Result<(f64, f64)> {
        let (Some(l), Some(r)) = (self.left.get(piece), self.right.get(piece)) else {
            return Err(Error::domain(format!(
                "word-piece `{piece}` not in table for `{}`",
                self.property
            )));
        };
        Ok((
            shannon_entropy(l.values().copied())?,
            shannon_entropy(r.values().copied())?,
        ))
    }

    /// Left/right neighbour entropy combined per [`LrEntMode`].
    pub fn lr_entropy(&self, piece: &str) -> Result<f64> {
        let (l, r) = self.neighbor_entropies(piece)?;
        Ok(match self.options.lrent_mode {
            LrEntMode::Min => l.min(r),
            LrEntMode::Avg => 0.5 * (l + r),
        })
    }

    /// Debug dump: `piece freq left_entropy right_entropy`, most frequent first.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut rows: Vec<_> = self.piece_freq.iter().collect();
        rows.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        writeln!(w, "piece\tfreq\tleft_entropy\tright_entropy")?;
        for (piece, freq) in rows {
            let (l, r) = self.neighbor_entropies(piece)?;
            writeln!(w, "{piece}\t{freq}\t{l:.6}\t{r:.6}")?;
        }
        Ok(())
    }
}
