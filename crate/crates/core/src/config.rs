//! Pipeline configuration: a JSON file with every key optional, overridden
//! by command-line flags, validated before any input is touched.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed::HttpOptions;
use crate::error::{Error, Result};
use crate::ingest::TripleFormat;
use crate::selection::Direction;
use crate::similarity::{EmbeddingSpec, SimilarityConfig};
use crate::wordpiece::StatsOptions;

pub const EMBED_ENDPOINT_ENV: &str = "SYNSET_EMBED_ENDPOINT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneScope {
    #[default]
    PerProperty,
    Global,
}

impl FromStr for PruneScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-property" | "per_property" | "property" => Ok(PruneScope::PerProperty),
            "global" => Ok(PruneScope::Global),
            other => Err(Error::config(format!("unknown prune scope `{other}`"))),
        }
    }
}

/// Which members may donate core parts to a host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DonorScope {
    #[default]
    Synset,
    Property,
}

impl FromStr for DonorScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synset" => Ok(DonorScope::Synset),
            "property" => Ok(DonorScope::Property),
            other => Err(Error::config(format!("unknown donor scope `{other}`"))),
        }
    }
}

impl fmt::Display for DonorScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DonorScope::Synset => "synset",
            DonorScope::Property => "property",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub format: TripleFormat,
    pub output_dir: Option<PathBuf>,
    pub gold: Option<PathBuf>,

    pub top_k: usize,
    pub direction: Direction,
    pub max_wordpiece_len: usize,
    pub stats: StatsOptions,
    pub similarity: SimilarityConfig,

    pub prune_q: f64,
    pub prune_scope: PruneScope,
    pub resolution: f64,
    pub seed: u64,
    pub lexicon: Option<PathBuf>,
    pub lexicon_weight: f64,
    pub include_singletons: bool,
    pub max_values_per_property: usize,

    pub core_k: usize,
    pub min_pcs: f64,
    pub expansion_cap: usize,
    pub donor_scope: DonorScope,

    /// Consumed by the downstream boosting trainer; only validated here.
    pub stop_ratio: f64,
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            format: TripleFormat::Tsv,
            output_dir: None,
            gold: None,
            top_k: 5000,
            direction: Direction::HighestPcp,
            max_wordpiece_len: 6,
            stats: StatsOptions::default(),
            similarity: SimilarityConfig::default(),
            prune_q: 0.40,
            prune_scope: PruneScope::PerProperty,
            resolution: 1.0,
            seed: 42,
            lexicon: None,
            lexicon_weight: 1.0,
            include_singletons: false,
            max_values_per_property: 20_000,
            core_k: 2,
            min_pcs: 0.0,
            expansion_cap: 64,
            donor_scope: DonorScope::Synset,
            stop_ratio: 0.60,
            threads: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Replaces the embedding methods with one HTTP provider.
    pub fn use_embed_endpoint(&mut self, endpoint: &str, cache: Option<PathBuf>) {
        self.similarity.embedding_methods = vec![EmbeddingSpec::Http {
            endpoint: endpoint.to_string(),
            options: HttpOptions::default(),
            cache,
        }];
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::config(msg.to_string()));
        if self.top_k == 0 {
            return fail("top_k must be >= 1");
        }
        if self.max_wordpiece_len == 0 {
            return fail("max_wordpiece_len must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.prune_q) {
            return fail("prune_q must be in [0, 1]");
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return fail("resolution must be a positive number");
        }
        if !(self.lexicon_weight.is_finite() && self.lexicon_weight > 0.0) {
            return fail("lexicon_weight must be a positive number");
        }
        if self.max_values_per_property < 2 {
            return fail("max_values_per_property must be >= 2");
        }
        if self.core_k == 0 {
            return fail("core_k must be >= 1");
        }
        if self.min_pcs.is_nan() {
            return fail("min_pcs must be a number");
        }
        if !(self.stop_ratio > 0.0 && self.stop_ratio <= 1.0) {
            return fail("stop_ratio must be in (0, 1]");
        }
        if self.threads == Some(0) {
            return fail("threads must be >= 1");
        }
        for spec in &self.similarity.embedding_methods {
            match spec {
                EmbeddingSpec::Hashing { dim: 0, .. } => return fail("hashing dim must be >= 1"),
                EmbeddingSpec::Http { endpoint, options, .. } => {
                    if endpoint.trim().is_empty() {
                        return fail("embedding endpoint is empty");
                    }
                    if options.batch_size == 0 || options.max_in_flight == 0 {
                        return fail("embedding batch_size and max_in_flight must be >= 1");
                    }
                }
                _ => {}
            }
        }
        self.similarity.validate()
    }
}
