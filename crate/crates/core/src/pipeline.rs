//! End-to-end mining: ingest, select, graph, prune, cluster, expand, report.
//!
//! Per-property work runs on the rayon pool; every step that combines
//! properties happens after a join, in selection order, so the output does
//! not depend on scheduling.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::clustering::{
    build_graph, inject_lexicon, louvain_assign, partition_to_synsets, prune_edges, prune_edges_global,
    read_lexicon, NodeKind, SimilarityGraph,
};
use crate::config::{DonorScope, PipelineConfig, PruneScope};
use crate::embed::{fnv1a, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::expansion::{expand_with_cores, expanded_record, member_cores};
use crate::ingest::{index_dump, ParseStats, PropertyIndex, TripleFormat};
use crate::metrics::{
    assignment_of, rand_index_counts, read_gold, synset_stats, GoldLabeling, MiningReport, PairCounts,
    PropertyReport,
};
use crate::selection::{select_properties, PropertyScore};
use crate::synset::{write_jsonl, Origin, Synset};
use crate::wordpiece::{build_table_with, WordPieceTable};

pub const SYNSETS_FILE: &str = "synsets.jsonl";
pub const REPORT_FILE: &str = "report.json";

/// Louvain seed for one property, independent of processing order.
pub fn property_seed(seed: u64, property: &str) -> u64 {
    fnv1a(seed, property.as_bytes())
}

pub fn load_dump(path: &Path, format: TripleFormat) -> Result<(PropertyIndex, ParseStats)> {
    let file = File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    index_dump(BufReader::new(file), format)
}

pub fn load_gold(path: &Path) -> Result<GoldLabeling> {
    read_gold(BufReader::new(File::open(path)?))
}

pub fn load_lexicon(path: &Path) -> Result<Vec<Vec<String>>> {
    read_lexicon(BufReader::new(File::open(path)?))
}

/// One selected property with its statistics and pruned graph.
pub struct PropertyGraph {
    pub score: PropertyScore,
    pub table: WordPieceTable,
    pub graph: SimilarityGraph,
    pub edges_before_pruning: usize,
}

pub fn build_graphs(
    index: &PropertyIndex,
    selected: &[PropertyScore],
    config: &PipelineConfig,
    providers: &[&dyn EmbeddingProvider],
) -> Result<Vec<PropertyGraph>> {
    selected
        .par_iter()
        .map(|score| {
            let values = index
                .get(&score.predicate)
                .ok_or_else(|| Error::input(format!("unknown property `{}`", score.predicate)))?;
            let table = build_table_with(&score.predicate, values, config.max_wordpiece_len, config.stats)?;
            let graph = build_graph(
                &score.predicate,
                values,
                &table,
                &config.similarity,
                providers,
                config.max_values_per_property,
            )?;
            Ok(PropertyGraph {
                score: score.clone(),
                table,
                edges_before_pruning: graph.edge_count(),
                graph,
            })
        })
        .collect()
}

pub fn prune_graphs(graphs: &mut [PropertyGraph], config: &PipelineConfig) -> Result<()> {
    match config.prune_scope {
        PruneScope::PerProperty => {
            for g in graphs.iter_mut() {
                g.graph = prune_edges(&g.graph, config.prune_q)?;
            }
        }
        PruneScope::Global => {
            let mut all: Vec<SimilarityGraph> = graphs.iter().map(|g| g.graph.clone()).collect();
            prune_edges_global(&mut all, config.prune_q)?;
            for (g, pruned) in graphs.iter_mut().zip(all) {
                g.graph = pruned;
            }
        }
    }
    Ok(())
}

/// Louvain on one graph; returns the synsets and the final modularity.
pub fn cluster_graph(graph: &SimilarityGraph, config: &PipelineConfig) -> Result<(Vec<Synset>, f64)> {
    if graph.nodes.is_empty() {
        return Err(Error::domain("cannot cluster an empty graph"));
    }
    let outcome = louvain_assign(
        graph.node_count(),
        &graph.weighted_edges(),
        property_seed(config.seed, &graph.property),
        config.resolution,
    );
    Ok((partition_to_synsets(graph, &outcome.assignment), outcome.modularity))
}

/// Expanded records for the mined synsets of one property.
///
/// Expressions equal to any value of the property, or already produced for
/// an earlier synset, are dropped.
pub fn expand_property(
    mined: &[Synset],
    table: &WordPieceTable,
    property_values: &HashSet<String>,
    config: &PipelineConfig,
) -> Result<Vec<Synset>> {
    let min_len = if config.include_singletons { 1 } else { 2 };
    let all_members: Vec<_> = mined.iter().flat_map(|s| s.members.iter().cloned()).collect();
    let cores = member_cores(&all_members, table, config.core_k, config.min_pcs)?;
    let mut exclude = property_values.clone();
    let mut out = Vec::new();
    for s in mined.iter().filter(|s| s.len() >= min_len) {
        let donors = match config.donor_scope {
            DonorScope::Synset => &s.members,
            DonorScope::Property => &all_members,
        };
        let expansions = expand_with_cores(&s.synset_id, &s.members, donors, &cores, &exclude, config.expansion_cap);
        exclude.extend(expansions.iter().map(|e| e.text.clone()));
        out.extend(expanded_record(s, &expansions));
    }
    Ok(out)
}

/// Re-expands previously mined records; existing expanded records are
/// replaced. Output keeps each property's synsets in input order.
pub fn expand_records(records: &[Synset], index: &PropertyIndex, config: &PipelineConfig) -> Result<Vec<Synset>> {
    config.validate()?;
    let mined: Vec<Synset> = mined_records(records).cloned().collect();
    let mut properties: Vec<&str> = Vec::new();
    for s in &mined {
        if !properties.contains(&s.property.as_str()) {
            properties.push(&s.property);
        }
    }
    let mut out = Vec::with_capacity(records.len());
    for property in properties {
        let values = index
            .get(property)
            .ok_or_else(|| Error::input(format!("property `{property}` not found in the index")))?;
        let table = build_table_with(property, values, config.max_wordpiece_len, config.stats)?;
        let own: Vec<Synset> = mined.iter().filter(|s| s.property == property).cloned().collect();
        let all: HashSet<String> = values.iter().map(|(v, _)| v.to_string()).collect();
        let expanded = expand_property(&own, &table, &all, config)?;
        let mut exp_iter = expanded.into_iter().peekable();
        for s in own {
            let id = s.synset_id.clone();
            out.push(s);
            if let Some(e) = exp_iter.next_if(|e| e.synset_id == id) {
                out.push(e);
            }
        }
    }
    Ok(out)
}

/// Everything `run` produces, before it is written out.
pub struct MiningOutput {
    pub records: Vec<Synset>,
    pub report: MiningReport,
}

/// Runs the mining stages on an in-memory index.
pub fn mine(
    index: &PropertyIndex,
    parse: &ParseStats,
    config: &PipelineConfig,
    lexicon: Option<&[Vec<String>]>,
    gold: Option<&GoldLabeling>,
) -> Result<MiningOutput> {
    config.validate()?;
    let mut report = MiningReport::new(parse);
    let mut clock = Instant::now();
    let mut lap = |report: &mut MiningReport, stage: &str| {
        report
            .timing_ms
            .insert(stage.to_string(), clock.elapsed().as_secs_f64() * 1e3);
        clock = Instant::now();
    };

    let selected = select_properties(index, config.top_k, config.direction, config.max_wordpiece_len)
        .map_err(|e| e.in_stage("select"))?;
    lap(&mut report, "select");

    let providers = config.similarity.build_providers().map_err(|e| e.in_stage("embed"))?;
    let provider_refs: Vec<&dyn EmbeddingProvider> = providers.iter().map(|p| p.as_ref()).collect();
    let mut graphs = build_graphs(index, &selected, config, &provider_refs).map_err(|e| e.in_stage("graph"))?;
    lap(&mut report, "graph");

    prune_graphs(&mut graphs, config).map_err(|e| e.in_stage("prune"))?;
    if let Some(lexicon) = lexicon {
        for g in graphs.iter_mut() {
            g.graph = inject_lexicon(&g.graph, lexicon, config.lexicon_weight).map_err(|e| e.in_stage("inject"))?;
        }
    }
    lap(&mut report, "prune");

    let clustered: Vec<(Vec<Synset>, f64)> = graphs
        .par_iter()
        .map(|g| cluster_graph(&g.graph, config))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("cluster"))?;
    lap(&mut report, "cluster");

    let expanded: Vec<Vec<Synset>> = graphs
        .par_iter()
        .zip(&clustered)
        .map(|(g, (mined, _))| {
            let values: HashSet<String> = index
                .get(&g.score.predicate)
                .map(|v| v.iter().map(|(s, _)| s.to_string()).collect())
                .unwrap_or_default();
            expand_property(mined, &g.table, &values, config)
        })
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("expand"))?;
    lap(&mut report, "expand");

    let mut records = Vec::new();
    let mut ri = (PairCounts::default(), PairCounts::default());
    let mut evaluated = false;
    for ((g, (mined, modularity)), exp) in graphs.iter().zip(&clustered).zip(&expanded) {
        let mut property_records: Vec<Synset> = Vec::with_capacity(mined.len() + exp.len());
        let mut exp_iter = exp.iter().peekable();
        for s in mined {
            property_records.push(s.clone());
            if let Some(e) = exp_iter.next_if(|e| e.synset_id == s.synset_id) {
                property_records.push(e.clone());
            }
        }
        let mut pr = PropertyReport {
            property: g.score.predicate.clone(),
            pcp: g.score.pcp,
            values: g.graph.nodes.iter().filter(|n| n.kind == NodeKind::Value).count(),
            edges: g.edges_before_pruning,
            edges_after_pruning: g.graph.edge_count(),
            modularity: *modularity,
            stats: synset_stats(&property_records, config.include_singletons),
            ri_wo_f: None,
            ri_w_f: None,
        };
        if let Some((wo, w)) = score_property(&property_records, &g.score.predicate, index, gold)? {
            pr.ri_wo_f = Some(wo.ratio());
            pr.ri_w_f = Some(w.ratio());
            ri.0 += wo;
            ri.1 += w;
            evaluated = true;
        }
        report.properties.push(pr);
        records.extend(property_records);
    }
    report.stats = synset_stats(&records, config.include_singletons);
    if evaluated {
        report.ri_wo_f = Some(ri.0.ratio());
        report.ri_w_f = Some(ri.1.ratio());
    }
    lap(&mut report, "report");
    Ok(MiningOutput { records, report })
}

/// Unweighted and frequency-weighted Rand Index pair counts of one
/// property's mined synsets, if gold labels exist for it.
pub fn score_property(
    records: &[Synset],
    property: &str,
    index: &PropertyIndex,
    gold: Option<&GoldLabeling>,
) -> Result<Option<(PairCounts, PairCounts)>> {
    let Some(gold_map) = gold.and_then(|gold| gold.property(property)) else {
        return Ok(None);
    };
    let pred = assignment_of(records, property);
    let freqs: BTreeMap<String, u64> = index.get(property).map(|v| v.entries().clone()).unwrap_or_default();
    let wo = rand_index_counts(&pred, gold_map, false, &freqs).map_err(|e| e.in_stage("eval"))?;
    let w = rand_index_counts(&pred, gold_map, true, &freqs).map_err(|e| e.in_stage("eval"))?;
    Ok(Some((wo, w)))
}

/// Statistics and Rand Index of existing synset records.
pub fn evaluate(
    records: &[Synset],
    index: &PropertyIndex,
    gold: Option<&GoldLabeling>,
    include_singletons: bool,
) -> Result<MiningReport> {
    let mut report = MiningReport::new(&ParseStats::default());
    let mut properties: Vec<&str> = records.iter().map(|s| s.property.as_str()).collect();
    properties.sort_unstable();
    properties.dedup();
    let mut ri = (PairCounts::default(), PairCounts::default());
    let mut evaluated = false;
    for property in properties {
        let own: Vec<Synset> = records.iter().filter(|s| s.property == property).cloned().collect();
        let mut pr = PropertyReport {
            property: property.to_string(),
            values: assignment_of(&own, property).len(),
            stats: synset_stats(&own, include_singletons),
            ..PropertyReport::default()
        };
        if let Some((wo, w)) = score_property(&own, property, index, gold)? {
            pr.ri_wo_f = Some(wo.ratio());
            pr.ri_w_f = Some(w.ratio());
            ri.0 += wo;
            ri.1 += w;
            evaluated = true;
        }
        report.properties.push(pr);
    }
    report.stats = synset_stats(records, include_singletons);
    if evaluated {
        report.ri_wo_f = Some(ri.0.ratio());
        report.ri_w_f = Some(ri.1.ratio());
    }
    Ok(report)
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::config(format!("{what} path is required")))
}

/// Runs the full pipeline from `config.input` and writes the synset JSONL
/// and report JSON into `config.output_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<MiningReport> {
    config.validate()?;
    let input = required(&config.input, "input")?;
    let out_dir = required(&config.output_dir, "output directory")?;
    let run = || -> Result<MiningReport> {
        let start = Instant::now();
        let (index, parse) = load_dump(input, config.format).map_err(|e| e.in_stage("ingest"))?;
        let ingest_ms = start.elapsed().as_secs_f64() * 1e3;
        let lexicon = config
            .lexicon
            .as_deref()
            .map(load_lexicon)
            .transpose()
            .map_err(|e| e.in_stage("inject"))?;
        let gold = config
            .gold
            .as_deref()
            .map(load_gold)
            .transpose()
            .map_err(|e| e.in_stage("eval"))?;
        let mut out = mine(&index, &parse, config, lexicon.as_deref(), gold.as_ref())?;
        out.report.timing_ms.insert("ingest".into(), ingest_ms);
        write_outputs(out_dir, &out).map_err(|e| e.in_stage("write"))?;
        Ok(out.report)
    };
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

pub fn write_outputs(out_dir: &Path, out: &MiningOutput) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut w = BufWriter::new(File::create(out_dir.join(SYNSETS_FILE))?);
    write_jsonl(&mut w, &out.records)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(out_dir.join(REPORT_FILE))?);
    serde_json::to_writer_pretty(&mut w, &out.report)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Mined records only, for inspection and evaluation tooling.
pub fn mined_records(records: &[Synset]) -> impl Iterator<Item = &Synset> + '_ {
    records.iter().filter(|s| s.origin == Origin::Mined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ValueMultiset;
    use crate::synset::Member;
    use crate::wordpiece::build_table;

    #[test]
    fn property_seed_depends_on_name() {
        assert_ne!(property_seed(1, "a"), property_seed(1, "b"));
        assert_eq!(property_seed(1, "a"), property_seed(1, "a"));
    }

    #[test]
    fn invalid_config_fails_before_io() {
        let config = PipelineConfig {
            top_k: 0,
            input: Some("/nonexistent/dump.tsv".into()),
            output_dir: Some("/nonexistent/out".into()),
            ..PipelineConfig::default()
        };
        let err = run_pipeline(&config).unwrap_err();
        assert_eq!(err.code(), "E_CONFIG");
    }

    #[test]
    fn missing_input_is_io_error_in_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let config = PipelineConfig {
            input: Some(dir.path().join("absent.tsv")),
            output_dir: Some(dir.path().join("out")),
            ..PipelineConfig::default()
        };
        let err = run_pipeline(&config).unwrap_err();
        assert_eq!((err.stage(), err.code()), (Some("ingest"), "E_IO"));
    }

    #[test]
    fn expansion_skips_property_values_and_repeats() {
        let values: ValueMultiset = [("男生", 3u64), ("女生", 2), ("男孩", 2), ("女孩", 1)].into_iter().collect();
        let table = build_table("p", &values, 6).unwrap();
        let mined = vec![
            Synset::mined("p#0".into(), "p", vec![Member::new("男生", 3), Member::new("男孩", 2)]),
            Synset::mined("p#1".into(), "p", vec![Member::new("女生", 2), Member::new("女孩", 1)]),
        ];
        let all: HashSet<String> = values.iter().map(|(v, _)| v.to_string()).collect();
        let config = PipelineConfig {
            donor_scope: DonorScope::Property,
            min_pcs: f64::NEG_INFINITY,
            ..PipelineConfig::default()
        };
        let out = expand_property(&mined, &table, &all, &config).unwrap();
        let mut seen = HashSet::new();
        for rec in &out {
            assert_eq!(rec.origin, Origin::Expanded);
            for m in &rec.members {
                assert!(!all.contains(&m.value), "{}", m.value);
                assert!(seen.insert(m.value.clone()), "{}", m.value);
                assert!(m.value.contains(m.donor_core.as_deref().unwrap()));
            }
        }
    }
}
