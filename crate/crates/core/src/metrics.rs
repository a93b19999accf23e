//! Rand Index, synset statistics and the mining report.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{normalize_text, ParseStats};
use crate::synset::{Origin, Synset};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Gold cluster ids, keyed by property then value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldLabeling {
    by_property: BTreeMap<String, BTreeMap<String, String>>,
}

impl GoldLabeling {
    pub fn insert(&mut self, property: &str, value: &str, gold_id: &str) -> Result<()> {
        let slot = self.by_property.entry(property.to_string()).or_default();
        match slot.get(value) {
            Some(prev) if prev != gold_id => Err(Error::input(format!(
                "gold value `{value}` of `{property}` has two ids: {prev}, {gold_id}"
            ))),
            _ => {
                slot.insert(value.to_string(), gold_id.to_string());
                Ok(())
            }
        }
    }

    pub fn property(&self, property: &str) -> Option<&BTreeMap<String, String>> {
        self.by_property.get(property)
    }

    pub fn properties(&self) -> impl Iterator<Item = &str> + '_ {
        self.by_property.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.by_property.is_empty()
    }
}

/// Reads `property \t value \t gold_id` lines; `#` starts a comment line.
pub fn read_gold<R: BufRead>(reader: R) -> Result<GoldLabeling> {
    let mut gold = GoldLabeling::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::input(format!(
                "gold line {}: expected 3 tab-separated fields, got {}",
                n + 1,
                fields.len()
            )));
        }
        gold.insert(
            &normalize_text(fields[0]),
            &normalize_text(fields[1]),
            fields[2].trim(),
        )?;
    }
    Ok(gold)
}

/// Agreeing and total element pairs of two partitions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub agree: u128,
    pub total: u128,
}

impl PairCounts {
    /// Agreement ratio; a population with fewer than two elements has no
    /// disagreeing pair and scores 1.
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.agree as f64 / self.total as f64
        }
    }
}

impl std::ops::AddAssign for PairCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.agree += rhs.agree;
        self.total += rhs.total;
    }
}

fn choose2(n: u128) -> u128 {
    n * n.saturating_sub(1) / 2
}

/// Pair counts for element `i` in cluster `a[i]` / `b[i]` replicated `w[i]`
/// times, computed from the contingency table.
pub fn pair_counts(a: &[usize], b: &[usize], w: &[u64]) -> PairCounts {
    debug_assert!(a.len() == b.len() && b.len() == w.len());
    let mut cells: HashMap<(usize, usize), u128> = HashMap::new();
    let mut rows: HashMap<usize, u128> = HashMap::new();
    let mut cols: HashMap<usize, u128> = HashMap::new();
    let mut total = 0u128;
    for i in 0..a.len() {
        let f = w[i] as u128;
        *cells.entry((a[i], b[i])).or_default() += f;
        *rows.entry(a[i]).or_default() += f;
        *cols.entry(b[i]).or_default() += f;
        total += f;
    }
    let both: u128 = cells.values().map(|&n| choose2(n)).sum();
    let same_a: u128 = rows.values().map(|&n| choose2(n)).sum();
    let same_b: u128 = cols.values().map(|&n| choose2(n)).sum();
    let pairs = choose2(total);
    PairCounts {
        agree: pairs + 2 * both - same_a - same_b,
        total: pairs,
    }
}

/// Pair counts of a predicted and a gold labeling over the same values.
pub fn rand_index_counts<P: Ord + Clone, G: Ord + Clone>(
    pred: &BTreeMap<String, P>,
    gold: &BTreeMap<String, G>,
    frequency_weighted: bool,
    freqs: &BTreeMap<String, u64>,
) -> Result<PairCounts> {
    let only_pred: Vec<&str> = pred.keys().filter(|v| !gold.contains_key(*v)).map(String::as_str).collect();
    let only_gold: Vec<&str> = gold.keys().filter(|v| !pred.contains_key(*v)).map(String::as_str).collect();
    if !only_pred.is_empty() || !only_gold.is_empty() {
        return Err(Error::input(format!(
            "partition coverage mismatch: missing from gold {only_pred:?}, missing from prediction {only_gold:?}"
        )));
    }
    let pred_ids = dense_ids(pred.values());
    let gold_ids = dense_ids(gold.values());
    let mut w = Vec::with_capacity(pred.len());
    for v in pred.keys() {
        w.push(if frequency_weighted {
            *freqs
                .get(v)
                .ok_or_else(|| Error::input(format!("no frequency for value `{v}`")))?
        } else {
            1
        });
    }
    Ok(pair_counts(&pred_ids, &gold_ids, &w))
}

pub fn rand_index<P: Ord + Clone, G: Ord + Clone>(
    pred: &BTreeMap<String, P>,
    gold: &BTreeMap<String, G>,
    frequency_weighted: bool,
    freqs: &BTreeMap<String, u64>,
) -> Result<f64> {
    rand_index_counts(pred, gold, frequency_weighted, freqs).map(|c| c.ratio())
}

fn dense_ids<'a, T: Ord + Clone + 'a>(labels: impl Iterator<Item = &'a T>) -> Vec<usize> {
    let mut ids: BTreeMap<T, usize> = BTreeMap::new();
    labels
        .map(|l| {
            let next = ids.len();
            *ids.entry(l.clone()).or_insert(next)
        })
        .collect()
}

/// Value to synset id for the mined synsets of one property.
pub fn assignment_of(synsets: &[Synset], property: &str) -> BTreeMap<String, String> {
    synsets
        .iter()
        .filter(|s| s.origin == Origin::Mined && s.property == property)
        .flat_map(|s| s.values().map(move |v| (v.to_string(), s.synset_id.clone())))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynsetStats {
    #[serde(rename = "N_S")]
    pub n_s: usize,
    #[serde(rename = "N_sv")]
    pub n_sv: usize,
    #[serde(rename = "N_esv")]
    pub n_esv: usize,
}

/// Counts synsets, their distinct values and distinct expansions.
///
/// Mined synsets smaller than two members are ignored unless
/// `include_singletons`. Values are distinct per property.
pub fn synset_stats(synsets: &[Synset], include_singletons: bool) -> SynsetStats {
    let min_len = if include_singletons { 1 } else { 2 };
    let mut n_s = 0;
    let mut values: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut expanded: BTreeSet<(&str, &str)> = BTreeSet::new();
    for s in synsets {
        match s.origin {
            Origin::Mined if s.len() >= min_len => {
                n_s += 1;
                values.extend(s.values().map(|v| (s.property.as_str(), v)));
            }
            Origin::Mined => {}
            Origin::Expanded => expanded.extend(s.values().map(|v| (s.property.as_str(), v))),
        }
    }
    let n_sv = values.len();
    let new = expanded.iter().filter(|e| !values.contains(e)).count();
    SynsetStats {
        n_s,
        n_sv,
        n_esv: n_sv + new,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub pcp: f64,
    pub values: usize,
    pub edges: usize,
    pub edges_after_pruning: usize,
    pub modularity: f64,
    #[serde(flatten)]
    pub stats: SynsetStats,
    #[serde(rename = "RI_wo_f")]
    pub ri_wo_f: Option<f64>,
    #[serde(rename = "RI_w_f")]
    pub ri_w_f: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MiningReport {
    pub schema_version: u32,
    #[serde(flatten)]
    pub stats: SynsetStats,
    /// Micro-averaged over evaluated properties; absent without gold.
    #[serde(rename = "RI_wo_f")]
    pub ri_wo_f: Option<f64>,
    #[serde(rename = "RI_w_f")]
    pub ri_w_f: Option<f64>,
    pub properties: Vec<PropertyReport>,
    pub lines: usize,
    pub triples: usize,
    pub malformed_lines: usize,
    pub skipped_lines: usize,
    pub timing_ms: BTreeMap<String, f64>,
}

impl MiningReport {
    pub fn new(parse: &ParseStats) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            lines: parse.lines,
            triples: parse.triples,
            malformed_lines: parse.malformed,
            skipped_lines: parse.skipped,
            ..Self::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synset::Member;

    fn map<T: Clone>(pairs: &[(&str, T)]) -> BTreeMap<String, T> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn identical_partitions_score_one() {
        let p = map(&[("a", 0), ("b", 0), ("c", 1)]);
        let f = map(&[("a", 3u64), ("b", 1), ("c", 2)]);
        assert_eq!(rand_index(&p, &p, false, &f).unwrap(), 1.0);
        assert_eq!(rand_index(&p, &p, true, &f).unwrap(), 1.0);
    }

    #[test]
    fn singletons_against_one_cluster_score_zero() {
        let p = map(&[("a", 0), ("b", 1), ("c", 2)]);
        let g = map(&[("a", "x"), ("b", "x"), ("c", "x")]);
        assert_eq!(rand_index(&p, &g, false, &BTreeMap::new()).unwrap(), 0.0);
    }

    #[test]
    fn replication_counts_within_element_pairs() {
        // a x2 and b x1, split apart in pred, together in gold:
        // 3 replicated pairs, only the (a,a) pair agrees
        let p = map(&[("a", 0), ("b", 1)]);
        let g = map(&[("a", 0), ("b", 0)]);
        let f = map(&[("a", 2u64), ("b", 1)]);
        let c = rand_index_counts(&p, &g, true, &f).unwrap();
        assert_eq!(c, PairCounts { agree: 1, total: 3 });
    }

    #[test]
    fn coverage_mismatch_lists_values() {
        let p = map(&[("a", 0), ("b", 0)]);
        let g = map(&[("a", 0), ("c", 0)]);
        let err = rand_index(&p, &g, false, &BTreeMap::new()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Input(_)));
        assert!(msg.contains("\"b\"") && msg.contains("\"c\""), "{msg}");
    }

    #[test]
    fn gold_reader_rejects_conflicts() {
        let ok = read_gold("# header\nGender\t男\tM\nGender\t男性\tM\n".as_bytes()).unwrap();
        assert_eq!(ok.property("Gender").unwrap().len(), 2);
        assert!(read_gold("p\ta\t1\np\ta\t2\n".as_bytes()).is_err());
        assert!(read_gold("p\ta\n".as_bytes()).is_err());
    }

    #[test]
    fn stats_arithmetic() {
        assert_eq!(synset_stats(&[], false), SynsetStats::default());
        let members = |vs: &[&str]| vs.iter().map(|v| Member::new(*v, 1)).collect::<Vec<_>>();
        let mut synsets = vec![
            Synset::mined("p#0".into(), "p", members(&["a", "b", "c"])),
            Synset::mined("p#1".into(), "p", members(&["d", "e"])),
            Synset::mined("p#2".into(), "p", members(&["f"])),
        ];
        let mut exp = Synset::mined("p#0".into(), "p", members(&["x1", "x2", "x3"]));
        exp.origin = Origin::Expanded;
        synsets.push(exp);
        let mut exp = Synset::mined("p#1".into(), "p", members(&["y1", "y2"]));
        exp.origin = Origin::Expanded;
        synsets.push(exp);
        let s = synset_stats(&synsets, false);
        assert_eq!((s.n_s, s.n_sv, s.n_esv), (2, 5, 10));
        let s = synset_stats(&synsets, true);
        assert_eq!((s.n_s, s.n_sv, s.n_esv), (3, 6, 11));
    }

    #[test]
    fn report_uses_metric_labels() {
        let r = MiningReport::new(&ParseStats::default());
        let v = serde_json::to_value(&r).unwrap();
        for key in ["schema_version", "N_S", "N_sv", "N_esv", "RI_wo_f", "RI_w_f", "malformed_lines"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
