//! Pairwise similarity of value objects within one property.
//!
//! * Textual similarity is a frequency-weighted Jaccard over word-piece sets:
//!   the summed table frequency of the shared pieces divided by that of the
//!   union.
//! * Distributed-representation similarity is the cosine of value
//!   embeddings, where a value's embedding is the frequency-weighted sum of
//!   its pieces' embeddings.
//! * Semantic similarity is zero across properties and otherwise the product
//!   of every configured textual and embedding similarity, with negative
//!   cosines clamped to zero.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::embed::{
    cosine, normalize, CachedProvider, EmbeddingCache, EmbeddingProvider, HashingProvider,
    HttpOptions, HttpProvider, Vector, DEFAULT_HASH_DIM, DEFAULT_HASH_SEED,
};
use crate::error::{Error, Result};
use crate::wordpiece::{piece_set, WordPieceTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextualMethod {
    /// Weighted Jaccard over all word-pieces up to the table's max length.
    WeightedJaccard,
    /// Weighted Jaccard over single characters only.
    WeightedJaccardChars,
}

impl TextualMethod {
    fn piece_len(self, table: &WordPieceTable) -> usize {
        match self {
            TextualMethod::WeightedJaccard => table.max_len(),
            TextualMethod::WeightedJaccardChars => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "snake_case")]
pub enum EmbeddingSpec {
    Hashing {
        #[serde(default = "default_hash_dim")]
        dim: usize,
        #[serde(default = "default_hash_seed")]
        seed: u64,
    },
    Http {
        endpoint: String,
        #[serde(default)]
        options: HttpOptions,
        #[serde(default)]
        cache: Option<PathBuf>,
    },
}

fn default_hash_dim() -> usize {
    DEFAULT_HASH_DIM
}

fn default_hash_seed() -> u64 {
    DEFAULT_HASH_SEED
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec::Hashing {
            dim: DEFAULT_HASH_DIM,
            seed: DEFAULT_HASH_SEED,
        }
    }
}

impl EmbeddingSpec {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        match self {
            EmbeddingSpec::Hashing { dim, seed } => {
                if *dim == 0 {
                    return Err(Error::config("hashing dimension must be >= 1"));
                }
                Ok(Box::new(HashingProvider::new(*dim, *seed)))
            }
            EmbeddingSpec::Http {
                endpoint,
                options,
                cache,
            } => {
                let http = HttpProvider::new(endpoint, options.clone())?;
                let cache = match cache {
                    Some(path) => EmbeddingCache::open(path)?,
                    None => EmbeddingCache::in_memory(),
                };
                Ok(Box::new(CachedProvider::new(http, cache)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub textual_methods: Vec<TextualMethod>,
    pub embedding_methods: Vec<EmbeddingSpec>,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            textual_methods: vec![TextualMethod::WeightedJaccard],
            embedding_methods: vec![EmbeddingSpec::default()],
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.textual_methods.is_empty() {
            return Err(Error::config("at least one textual similarity method is required"));
        }
        Ok(())
    }

    pub fn build_providers(&self) -> Result<Vec<Box<dyn EmbeddingProvider>>> {
        self.embedding_methods.iter().map(EmbeddingSpec::build).collect()
    }
}

/// Weighted Jaccard of two sorted, deduplicated sets. `None` when the union
/// carries no weight.
pub fn weighted_jaccard<T: Ord, F: Fn(&T) -> u64>(a: &[T], b: &[T], weight: F) -> Option<f64> {
    let (mut i, mut j) = (0, 0);
    let (mut inter, mut union) = (0u64, 0u64);
    while i < a.len() || j < b.len() {
        let ord = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.cmp(y),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, _) => std::cmp::Ordering::Greater,
        };
        match ord {
            std::cmp::Ordering::Equal => {
                let w = weight(&a[i]);
                inter += w;
                union += w;
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => {
                union += weight(&a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                union += weight(&b[j]);
                j += 1;
            }
        }
    }
    (union > 0).then(|| inter as f64 / union as f64)
}

fn check_known(value: &str, pieces: &[String], table: &WordPieceTable) -> Result<()> {
    if value.is_empty() {
        return Err(Error::domain("empty value"));
    }
    if pieces.iter().all(|p| table.freq(p) == 0) {
        return Err(Error::domain(format!(
            "value `{value}` shares no word-piece with the table for `{}`",
            table.property()
        )));
    }
    Ok(())
}

/// Frequency-weighted Jaccard over the two values' word-piece sets.
pub fn textual_similarity(
    o_m: &str,
    o_n: &str,
    table: &WordPieceTable,
    method: TextualMethod,
) -> Result<f64> {
    let len = method.piece_len(table);
    let a = piece_set(o_m, len);
    let b = piece_set(o_n, len);
    check_known(o_m, &a, table)?;
    check_known(o_n, &b, table)?;
    Ok(weighted_jaccard(&a, &b, |p| table.freq(p)).expect("both sides carry weight"))
}

/// Embeds many values of one property with a single provider call.
pub fn embed_values(
    values: &[&str],
    table: &WordPieceTable,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Vector>> {
    let per_value: Vec<Vec<String>> = values
        .iter()
        .map(|v| {
            let pieces: Vec<String> = piece_set(v, table.max_len())
                .into_iter()
                .filter(|p| table.freq(p) > 0)
                .collect();
            if pieces.is_empty() {
                Err(Error::domain(format!(
                    "value `{v}` has no word-piece known to the table for `{}`",
                    table.property()
                )))
            } else {
                Ok(pieces)
            }
        })
        .collect::<Result<_>>()?;

    let mut unique: Vec<String> = per_value.iter().flatten().cloned().collect();
    unique.sort();
    unique.dedup();
    let vectors = provider.embed_batch(&unique)?;
    if vectors.len() != unique.len() {
        return Err(Error::Transport(format!(
            "provider returned {} vectors for {} texts",
            vectors.len(),
            unique.len()
        )));
    }
    let lookup: HashMap<&str, &Vector> = unique.iter().map(String::as_str).zip(&vectors).collect();

    per_value
        .iter()
        .zip(values)
        .map(|(pieces, value)| {
            let dim = lookup[pieces[0].as_str()].len();
            let mut acc = vec![0.0f64; dim];
            for p in pieces {
                let w = table.freq(p) as f64;
                let e = lookup[p.as_str()];
                if e.len() != dim {
                    return Err(Error::Transport("provider returned mixed dimensions".into()));
                }
                for (a, &x) in acc.iter_mut().zip(e.iter()) {
                    *a += w * f64::from(x);
                }
            }
            let mut v: Vector = acc.into_iter().map(|x| x as f32).collect();
            normalize(&mut v)
                .map_err(|_| Error::domain(format!("degenerate embedding for value `{value}`")))?;
            Ok(v)
        })
        .collect()
}

/// Unit-norm, frequency-weighted embedding of one value.
pub fn embed_value(
    value: &str,
    table: &WordPieceTable,
    provider: &dyn EmbeddingProvider,
) -> Result<Vector> {
    Ok(embed_values(&[value], table, provider)?.remove(0))
}

/// Cosine of the two value embeddings.
pub fn drs(
    o_m: &str,
    o_n: &str,
    table: &WordPieceTable,
    provider: &dyn EmbeddingProvider,
) -> Result<f64> {
    if o_m == o_n {
        embed_value(o_m, table, provider)?;
        return Ok(1.0);
    }
    let v = embed_values(&[o_m, o_n], table, provider)?;
    Ok(cosine(&v[0], &v[1]))
}

/// A value qualified by its property.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropertyValue<'a> {
    pub property: &'a str,
    pub value: &'a str,
}

/// Semantic similarity of two (property, value) pairs.
///
/// `providers[j]` must correspond to `config.embedding_methods[j]`.
pub fn semantic_similarity(
    a: PropertyValue<'_>,
    b: PropertyValue<'_>,
    config: &SimilarityConfig,
    tables: &BTreeMap<String, WordPieceTable>,
    providers: &[&dyn EmbeddingProvider],
) -> Result<f64> {
    if a.property != b.property {
        return Ok(0.0);
    }
    if providers.len() != config.embedding_methods.len() {
        return Err(Error::config(format!(
            "{} embedding methods configured but {} providers supplied",
            config.embedding_methods.len(),
            providers.len()
        )));
    }
    let table = tables
        .get(a.property)
        .ok_or_else(|| Error::domain(format!("no word-piece table for `{}`", a.property)))?;
    let mut score = 1.0;
    for &m in &config.textual_methods {
        score *= textual_similarity(a.value, b.value, table, m)?;
    }
    for p in providers {
        score *= drs(a.value, b.value, table, *p)?.max(0.0);
    }
    Ok(score)
}

/// Precomputed pair similarity for all values of one property.
///
/// Produces the same numbers as [`semantic_similarity`], but interns word
/// pieces and embeds each value once so O(n²) pair scoring stays cheap.
pub struct PropertySimilarity {
    /// Per textual method, per value: sorted (piece id, weight).
    piece_sets: Vec<Vec<Vec<(u32, u64)>>>,
    /// Per provider, per value.
    embeddings: Vec<Vec<Vector>>,
}

impl PropertySimilarity {
    pub fn new(
        values: &[&str],
        table: &WordPieceTable,
        config: &SimilarityConfig,
        providers: &[&dyn EmbeddingProvider],
    ) -> Result<Self> {
        config.validate()?;
        if providers.len() != config.embedding_methods.len() {
            return Err(Error::config("provider list does not match embedding methods"));
        }
        let mut ids: HashMap<String, u32> = HashMap::new();
        let mut piece_sets = Vec::with_capacity(config.textual_methods.len());
        for &m in &config.textual_methods {
            let len = m.piece_len(table);
            let sets = values
                .iter()
                .map(|v| {
                    let pieces = piece_set(v, len);
                    check_known(v, &pieces, table)?;
                    let mut set: Vec<(u32, u64)> = pieces
                        .into_iter()
                        .map(|p| {
                            let w = table.freq(&p);
                            let next = ids.len() as u32;
                            (*ids.entry(p).or_insert(next), w)
                        })
                        .collect();
                    set.sort_unstable();
                    Ok(set)
                })
                .collect::<Result<Vec<_>>>()?;
            piece_sets.push(sets);
        }
        let embeddings = providers
            .iter()
            .map(|p| embed_values(values, table, *p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            piece_sets,
            embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.piece_sets.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Semantic similarity of values `i` and `j`.
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        let mut score = 1.0;
        for sets in &self.piece_sets {
            score *= weighted_jaccard(&sets[i], &sets[j], |&(_, w)| w).unwrap_or(0.0);
            if score == 0.0 {
                return 0.0;
            }
        }
        for emb in &self.embeddings {
            score *= if i == j { 1.0 } else { cosine(&emb[i], &emb[j]).max(0.0) };
        }
        score
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ValueMultiset;
    use crate::wordpiece::build_table;

    fn gender() -> (ValueMultiset, WordPieceTable) {
        let values: ValueMultiset = [("男", 40u64), ("男性", 30), ("男♂", 6), ("♂", 5), ("女", 35), ("女性", 25)]
            .into_iter()
            .collect();
        let t = build_table("Gender", &values, 6).unwrap();
        (values, t)
    }

    #[test]
    fn identity_and_disjoint() {
        let (_, t) = gender();
        let m = TextualMethod::WeightedJaccard;
        assert_eq!(textual_similarity("男性", "男性", &t, m).unwrap(), 1.0);
        assert_eq!(textual_similarity("男", "女", &t, m).unwrap(), 0.0);
    }

    #[test]
    fn unknown_value_is_domain_error() {
        let (_, t) = gender();
        let r = textual_similarity("xyz", "男", &t, TextualMethod::WeightedJaccard);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn cross_property_is_zero() {
        let (_, t) = gender();
        let mut tables = BTreeMap::new();
        tables.insert("Gender".to_string(), t);
        let p = HashingProvider::default();
        let s = semantic_similarity(
            PropertyValue { property: "Gender", value: "男性" },
            PropertyValue { property: "Nationality", value: "美国" },
            &SimilarityConfig::default(),
            &tables,
            &[&p],
        )
        .unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn single_piece_value_embeds_to_piece() {
        let (_, t) = gender();
        let p = HashingProvider::default();
        let v = embed_value("男", &t, &p).unwrap();
        assert_eq!(v, p.embed_one("男"));
    }

    struct Constant;
    impl EmbeddingProvider for Constant {
        fn tag(&self) -> &str {
            "constant"
        }
        fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vector>> {
            Ok(texts.iter().map(|_| vec![0.6, 0.8]).collect())
        }
    }

    #[test]
    fn equal_piece_embeddings_normalize_back() {
        let values: ValueMultiset = [("aa", 3u64)].into_iter().collect();
        let t = build_table("p", &values, 2).unwrap();
        let v = embed_value("aa", &t, &Constant).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-6 && (v[1] - 0.8).abs() < 1e-6);
    }

    struct Axis;
    impl EmbeddingProvider for Axis {
        fn tag(&self) -> &str {
            "axis"
        }
        fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vector>> {
            Ok(texts
                .iter()
                .map(|t| if t.starts_with('x') { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
                .collect())
        }
    }

    #[test]
    fn orthogonal_embeddings_give_zero_drs() {
        let values: ValueMultiset = [("x", 1u64), ("y", 1)].into_iter().collect();
        let t = build_table("p", &values, 2).unwrap();
        assert_eq!(drs("x", "y", &t, &Axis).unwrap(), 0.0);
        assert_eq!(drs("x", "x", &t, &Axis).unwrap(), 1.0);
    }

    #[test]
    fn engine_matches_pairwise_function() {
        let (values, t) = gender();
        let names: Vec<&str> = values.iter().map(|(v, _)| v).collect();
        let config = SimilarityConfig::default();
        let p = HashingProvider::default();
        let engine = PropertySimilarity::new(&names, &t, &config, &[&p]).unwrap();
        let mut tables = BTreeMap::new();
        tables.insert("Gender".to_string(), t);
        for i in 0..names.len() {
            for j in 0..names.len() {
                let direct = semantic_similarity(
                    PropertyValue { property: "Gender", value: names[i] },
                    PropertyValue { property: "Gender", value: names[j] },
                    &config,
                    &tables,
                    &[&p],
                )
                .unwrap();
                assert!((engine.pair(i, j) - direct).abs() < 1e-9, "{} {}", names[i], names[j]);
            }
        }
    }

    #[test]
    fn no_embedding_methods_reduces_to_textual_product() {
        let (_, t) = gender();
        let config = SimilarityConfig {
            textual_methods: vec![TextualMethod::WeightedJaccard, TextualMethod::WeightedJaccardChars],
            embedding_methods: vec![],
        };
        let a = textual_similarity("男性", "男♂", &t, TextualMethod::WeightedJaccard).unwrap();
        let b = textual_similarity("男性", "男♂", &t, TextualMethod::WeightedJaccardChars).unwrap();
        let mut tables = BTreeMap::new();
        tables.insert("Gender".to_string(), t);
        let s = semantic_similarity(
            PropertyValue { property: "Gender", value: "男性" },
            PropertyValue { property: "Gender", value: "男♂" },
            &config,
            &tables,
            &[],
        )
        .unwrap();
        assert_eq!(s, a * b);
    }

    #[test]
    fn empty_textual_methods_rejected() {
        let c = SimilarityConfig { textual_methods: vec![], embedding_methods: vec![] };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
