//! Synset expansion by swapping core word-pieces between members.
//!
//! The core of an expression is found with the Probability of Core Semantic,
//!
//! ```text
//! pcs(piece) = freq(piece) * min_split pmi(x, y) * lr_entropy(piece)
//! ```
//!
//! where the minimum runs over every split `piece = x . y`. For a
//! two-character piece there is exactly one split. Each member's top-scoring
//! non-overlapping pieces are its core parts; a new expression is made by
//! replacing one core part of a host member with one core part of a donor.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synset::{Member, Origin, Synset};
use crate::wordpiece::WordPieceTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcsEntry {
    pub piece: String,
    pub freq: u64,
    pub pmi_min: f64,
    pub lrent: f64,
    pub pcs: f64,
}

pub fn pcs_score(piece: &str, table: &WordPieceTable) -> Result<PcsEntry> {
    let bounds: Vec<usize> = piece.char_indices().map(|(i, _)| i).collect();
    if bounds.len() < 2 {
        return Err(Error::domain(format!("`{piece}` has no internal split")));
    }
    let freq = table.freq(piece);
    if freq == 0 {
        return Err(Error::domain(format!("word-piece `{piece}` not in table")));
    }
    let mut pmi_min = f64::INFINITY;
    for &b in &bounds[1..] {
        pmi_min = pmi_min.min(table.pmi(&piece[..b], &piece[b..])?);
    }
    let lrent = table.lr_entropy(piece)?;
    Ok(PcsEntry {
        piece: piece.to_string(),
        freq,
        pmi_min,
        lrent,
        pcs: freq as f64 * pmi_min * lrent,
    })
}

/// A selected core word-piece and its char offset in the value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorePart {
    pub piece: String,
    pub start: usize,
    pub pcs: f64,
}

impl CorePart {
    pub fn len(&self) -> usize {
        self.piece.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.piece.is_empty()
    }

    fn end(&self) -> usize {
        self.start + self.len()
    }

    fn overlaps(&self, other: &CorePart) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

/// Selection order: higher pcs, then longer, then leftmost.
pub fn core_order(a: &CorePart, b: &CorePart) -> std::cmp::Ordering {
    b.pcs
        .total_cmp(&a.pcs)
        .then_with(|| b.len().cmp(&a.len()))
        .then_with(|| a.start.cmp(&b.start))
}

/// Every scorable piece occurrence of length >= 2 in `value` with
/// `pcs >= min_pcs`, in selection order.
pub fn core_candidates(value: &str, table: &WordPieceTable, min_pcs: f64) -> Vec<CorePart> {
    let chars: Vec<char> = value.chars().collect();
    let mut scores: HashMap<String, Option<f64>> = HashMap::new();
    let mut out = Vec::new();
    for start in 0..chars.len() {
        for len in 2..=table.max_len().min(chars.len() - start) {
            let piece: String = chars[start..start + len].iter().collect();
            let score = *scores
                .entry(piece.clone())
                .or_insert_with(|| pcs_score(&piece, table).ok().map(|e| e.pcs));
            if let Some(pcs) = score {
                if pcs.is_finite() && pcs >= min_pcs {
                    out.push(CorePart { piece, start, pcs });
                }
            }
        }
    }
    out.sort_by(core_order);
    out
}

/// Greedily picks up to `k` non-overlapping core parts.
pub fn core_parts(value: &str, table: &WordPieceTable, k: usize, min_pcs: f64) -> Result<Vec<CorePart>> {
    if k == 0 {
        return Err(Error::config("core part count k must be >= 1"));
    }
    let mut chosen: Vec<CorePart> = Vec::new();
    for c in core_candidates(value, table, min_pcs) {
        if chosen.len() == k {
            break;
        }
        if chosen.iter().all(|x| !x.overlaps(&c)) {
            chosen.push(c);
        }
    }
    Ok(chosen)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedExpression {
    pub text: String,
    pub donor_core: String,
    pub host_value: String,
    pub synset_id: String,
}

/// Replaces the core part at its char position with `donor`.
fn swap(host: &str, part: &CorePart, donor: &str) -> String {
    let mut out = String::with_capacity(host.len() + donor.len());
    let mut it = host.chars();
    out.extend(it.by_ref().take(part.start));
    out.push_str(donor);
    out.extend(it.skip(part.len()));
    out
}

/// Generates expansions from explicit core parts.
///
/// Every (host, donor) pair of distinct members yields one candidate per
/// (host core, donor core) combination with different pieces. Candidates in
/// `exclude` or already produced are dropped. The survivors are ordered by
/// host frequency (descending), host value, text, donor core and truncated
/// to `cap`.
pub fn expand_with_cores(
    synset_id: &str,
    hosts: &[Member],
    donors: &[Member],
    cores: &HashMap<String, Vec<CorePart>>,
    exclude: &HashSet<String>,
    cap: usize,
) -> Vec<ExpandedExpression> {
    let mut hosts: Vec<&Member> = hosts.iter().collect();
    hosts.sort_by(|a, b| b.freq.cmp(&a.freq).then_with(|| a.value.cmp(&b.value)));

    let mut out = Vec::new();
    if cap == 0 {
        return out;
    }
    let mut seen: HashSet<String> = HashSet::new();
    for host in hosts {
        let Some(host_cores) = cores.get(&host.value) else { continue };
        let mut local: Vec<(String, String)> = Vec::new();
        for donor in donors.iter().filter(|d| d.value != host.value) {
            let Some(donor_cores) = cores.get(&donor.value) else { continue };
            for hc in host_cores {
                for dc in donor_cores {
                    if dc.piece == hc.piece {
                        continue;
                    }
                    local.push((swap(&host.value, hc, &dc.piece), dc.piece.clone()));
                }
            }
        }
        local.sort();
        for (text, donor_core) in local {
            if exclude.contains(&text) || !seen.insert(text.clone()) {
                continue;
            }
            out.push(ExpandedExpression {
                text,
                donor_core,
                host_value: host.value.clone(),
                synset_id: synset_id.to_string(),
            });
            if out.len() == cap {
                return out;
            }
        }
    }
    out
}

/// Core parts for every member of `synset`.
pub fn member_cores(
    members: &[Member],
    table: &WordPieceTable,
    k: usize,
    min_pcs: f64,
) -> Result<HashMap<String, Vec<CorePart>>> {
    members
        .iter()
        .map(|m| Ok((m.value.clone(), core_parts(&m.value, table, k, min_pcs)?)))
        .collect()
}

/// Expands one synset using donors from the same synset.
pub fn expand_synset(
    synset: &Synset,
    table: &WordPieceTable,
    k: usize,
    min_pcs: f64,
    cap: usize,
) -> Result<Vec<ExpandedExpression>> {
    let cores = member_cores(&synset.members, table, k, min_pcs)?;
    let exclude: HashSet<String> = synset.values().map(str::to_string).collect();
    Ok(expand_with_cores(
        &synset.synset_id,
        &synset.members,
        &synset.members,
        &cores,
        &exclude,
        cap,
    ))
}

/// Packs one synset's expansions into an `expanded` record.
pub fn expanded_record(synset: &Synset, expansions: &[ExpandedExpression]) -> Option<Synset> {
    if expansions.is_empty() {
        return None;
    }
    Some(Synset {
        synset_id: synset.synset_id.clone(),
        property: synset.property.clone(),
        members: expansions
            .iter()
            .map(|e| Member {
                value: e.text.clone(),
                freq: 0,
                host_value: Some(e.host_value.clone()),
                donor_core: Some(e.donor_core.clone()),
            })
            .collect(),
        origin: Origin::Expanded,
    })
}
