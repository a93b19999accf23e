//! Similarity graphs and Louvain community detection.
//!
//! Each selected property gets its own weighted graph over its values (pairs
//! across properties always score zero, so a KG-wide graph would be block
//! diagonal anyway). The weakest edges are pruned, an external lexicon may
//! add virtual hub nodes, and Louvain turns the graph into synsets.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::ingest::ValueMultiset;
use crate::similarity::{PropertySimilarity, SimilarityConfig};
use crate::synset::{Member, Synset};
use crate::wordpiece::WordPieceTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Value,
    LexiconVirtual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub label: String,
    pub freq: u64,
    pub kind: NodeKind,
}

impl Node {
    pub fn value(label: impl Into<String>, freq: u64) -> Self {
        Self {
            label: label.into(),
            freq,
            kind: NodeKind::Value,
        }
    }
}

/// Undirected weighted edge, stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    pub property: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl SimilarityGraph {
    /// Builds a graph from explicit edges. Self-loops and non-positive
    /// weights are dropped; parallel edges are summed.
    pub fn from_edges(property: &str, nodes: Vec<Node>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut merged: HashMap<(usize, usize), f64> = HashMap::new();
        for &(a, b, w) in edges {
            if a >= nodes.len() || b >= nodes.len() {
                return Err(Error::input(format!("edge ({a},{b}) references a missing node")));
            }
            if a == b || w.is_nan() || w <= 0.0 {
                continue;
            }
            *merged.entry((a.min(b), a.max(b))).or_insert(0.0) += w;
        }
        let mut edges: Vec<Edge> = merged
            .into_iter()
            .map(|((u, v), weight)| Edge { u, v, weight })
            .collect();
        edges.sort_by_key(|e| (e.u, e.v));
        Ok(Self {
            property: property.to_string(),
            nodes,
            edges,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn weighted_edges(&self) -> Vec<(usize, usize, f64)> {
        self.edges.iter().map(|e| (e.u, e.v, e.weight)).collect()
    }
}

/// Scores every value pair of one property and keeps the positive ones.
///
/// Nodes are ordered by frequency (descending) then value; only the first
/// `max_values` are kept.
pub fn build_graph(
    property: &str,
    values: &ValueMultiset,
    table: &WordPieceTable,
    config: &SimilarityConfig,
    providers: &[&dyn EmbeddingProvider],
    max_values: usize,
) -> Result<SimilarityGraph> {
    if values.is_empty() {
        return Err(Error::domain(format!("property `{property}` has no values")));
    }
    let mut ranked = values.ranked();
    ranked.truncate(max_values.max(1));
    let labels: Vec<&str> = ranked.iter().map(|(v, _)| *v).collect();
    let sim = PropertySimilarity::new(&labels, table, config, providers)?;
    let n = labels.len();
    let edges: Vec<Edge> = (0..n)
        .into_par_iter()
        .flat_map_iter(|u| {
            let sim = &sim;
            (u + 1..n).filter_map(move |v| {
                let weight = sim.pair(u, v);
                (weight > 0.0).then_some(Edge { u, v, weight })
            })
        })
        .collect();
    Ok(SimilarityGraph {
        property: property.to_string(),
        nodes: ranked.iter().map(|&(v, f)| Node::value(v, f)).collect(),
        edges,
    })
}

fn prune_count(q: f64, edges: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::config(format!("prune fraction {q} outside [0, 1]")));
    }
    // tolerate representation error such as 0.4 * 10 = 4.000000000000001
    Ok(((q * edges as f64) - 1e-9).ceil().max(0.0) as usize)
}

fn weakest_first(a: &Edge, b: &Edge) -> std::cmp::Ordering {
    a.weight
        .total_cmp(&b.weight)
        .then_with(|| (a.u, a.v).cmp(&(b.u, b.v)))
}

/// Removes the `ceil(q * |E|)` lowest-weight edges, ties broken by
/// `(weight, u, v)`.
pub fn prune_edges(graph: &SimilarityGraph, q: f64) -> Result<SimilarityGraph> {
    let drop = prune_count(q, graph.edges.len())?;
    let mut order = graph.edges.clone();
    order.sort_by(weakest_first);
    let mut kept: Vec<Edge> = order.split_off(drop);
    kept.sort_by_key(|e| (e.u, e.v));
    Ok(SimilarityGraph {
        property: graph.property.clone(),
        nodes: graph.nodes.clone(),
        edges: kept,
    })
}

/// Prunes across several graphs at once: the `ceil(q * total edges)` weakest
/// edges overall are removed, ties broken by `(weight, property, u, v)`.
pub fn prune_edges_global(graphs: &mut [SimilarityGraph], q: f64) -> Result<()> {
    let total: usize = graphs.iter().map(|g| g.edges.len()).sum();
    let drop = prune_count(q, total)?;
    let mut all: Vec<(usize, Edge)> = graphs
        .iter()
        .enumerate()
        .flat_map(|(gi, g)| g.edges.iter().map(move |e| (gi, *e)))
        .collect();
    all.sort_by(|(ga, a), (gb, b)| {
        a.weight
            .total_cmp(&b.weight)
            .then_with(|| graphs[*ga].property.cmp(&graphs[*gb].property))
            .then_with(|| (a.u, a.v).cmp(&(b.u, b.v)))
    });
    let doomed: BTreeSet<(usize, usize, usize)> =
        all.iter().take(drop).map(|(g, e)| (*g, e.u, e.v)).collect();
    for (gi, g) in graphs.iter_mut().enumerate() {
        g.edges.retain(|e| !doomed.contains(&(gi, e.u, e.v)));
    }
    Ok(())
}

#[derive(Deserialize)]
struct LexiconLine {
    members: Vec<String>,
}

/// Reads `{"members": [...]}` lines.
pub fn read_lexicon<R: BufRead>(reader: R) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let l: LexiconLine = serde_json::from_str(&line)
            .map_err(|e| Error::input(format!("lexicon line {}: {e}", n + 1)))?;
        out.push(
            l.members
                .iter()
                .map(|m| crate::ingest::normalize_text(m))
                .collect(),
        );
    }
    Ok(out)
}

/// Adds one virtual hub per lexicon group that matches at least two value
/// nodes, linked to each matched member with `weight`.
pub fn inject_lexicon(graph: &SimilarityGraph, lexicon: &[Vec<String>], weight: f64) -> Result<SimilarityGraph> {
    if weight.is_nan() || weight <= 0.0 {
        return Err(Error::config("lexicon edge weight must be positive"));
    }
    let index: HashMap<&str, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.kind == NodeKind::Value)
        .map(|(i, n)| (n.label.as_str(), i))
        .collect();
    let mut nodes = graph.nodes.clone();
    let mut edges = graph.edges.clone();
    for (gi, group) in lexicon.iter().enumerate() {
        let matched: BTreeSet<usize> = group
            .iter()
            .filter_map(|m| index.get(m.as_str()).copied())
            .collect();
        if matched.len() < 2 {
            continue;
        }
        let hub = nodes.len();
        nodes.push(Node {
            label: format!("lexicon#{gi}"),
            freq: 0,
            kind: NodeKind::LexiconVirtual,
        });
        edges.extend(matched.into_iter().map(|u| Edge { u, v: hub, weight }));
    }
    Ok(SimilarityGraph {
        property: graph.property.clone(),
        nodes,
        edges,
    })
}

/// Weighted modularity with resolution `gamma`. A graph without edges has
/// modularity 0 under every partition.
pub fn modularity(n: usize, edges: &[(usize, usize, f64)], assignment: &[usize], gamma: f64) -> f64 {
    assert_eq!(assignment.len(), n);
    let m: f64 = edges.iter().map(|e| e.2).sum();
    if m <= 0.0 {
        return 0.0;
    }
    let k = assignment.iter().copied().max().map_or(0, |c| c + 1);
    let mut internal = vec![0.0; k];
    let mut degree = vec![0.0; k];
    for &(u, v, w) in edges {
        degree[assignment[u]] += w;
        degree[assignment[v]] += w;
        if assignment[u] == assignment[v] {
            internal[assignment[u]] += w;
        }
    }
    internal
        .iter()
        .zip(&degree)
        .map(|(l, d)| l / m - gamma * (d / (2.0 * m)).powi(2))
        .sum()
}

/// Renumbers community labels by first appearance.
pub fn canonicalize(assignment: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    assignment
        .iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LouvainOutcome {
    /// Community of every node, canonically numbered.
    pub assignment: Vec<usize>,
    pub modularity: f64,
    /// Modularity of the original graph after each level, starting with the
    /// all-singletons partition.
    pub trace: Vec<f64>,
}

struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    loops: Vec<f64>,
}

impl Level {
    fn degrees(&self) -> Vec<f64> {
        self.adj
            .iter()
            .zip(&self.loops)
            .map(|(a, l)| a.iter().map(|x| x.1).sum::<f64>() + 2.0 * l)
            .collect()
    }
}

const MAX_PASSES: usize = 10_000;
const GAIN_EPS: f64 = 1e-12;

/// One local-moving phase. Returns the community of every node and whether
/// any node moved.
fn local_moves(level: &Level, m: f64, gamma: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
    let n = level.adj.len();
    let k = level.degrees();
    let mut comm: Vec<usize> = (0..n).collect();
    let mut tot = k.clone();
    let mut size = vec![1usize; n];
    let mut empty: BTreeSet<usize> = BTreeSet::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut link = vec![0.0f64; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut any_move = false;

    for _ in 0..MAX_PASSES {
        let mut moved = false;
        for &i in &order {
            let old = comm[i];
            for &(j, w) in &level.adj[i] {
                let c = comm[j];
                if link[c] == 0.0 {
                    touched.push(c);
                }
                link[c] += w;
            }
            tot[old] -= k[i];
            size[old] -= 1;
            let gain = |c: usize, w_in: f64| w_in - gamma * tot[c] * k[i] / (2.0 * m);
            let stay = gain(old, link[old]);

            let mut best: Option<(usize, f64)> = None;
            let mut consider = |c: usize, g: f64| match best {
                Some((bc, bg)) if g < bg || (g == bg && c > bc) => {}
                _ => best = Some((c, g)),
            };
            for &c in &touched {
                if c != old {
                    consider(c, gain(c, link[c]));
                }
            }
            if size[old] > 0 {
                if let Some(&e) = empty.iter().next() {
                    consider(e, 0.0);
                }
            }

            let target = match best {
                Some((c, g)) if g > stay + GAIN_EPS => c,
                _ => old,
            };
            if target != old {
                moved = true;
                if size[old] == 0 {
                    empty.insert(old);
                }
                empty.remove(&target);
            }
            comm[i] = target;
            tot[target] += k[i];
            size[target] += 1;

            for c in touched.drain(..) {
                link[c] = 0.0;
            }
        }
        if !moved {
            break;
        }
        any_move = true;
    }
    (comm, any_move)
}

fn aggregate(level: &Level, comm: &[usize]) -> (Level, Vec<usize>) {
    let relabel = canonicalize(comm);
    let k = relabel.iter().copied().max().map_or(0, |c| c + 1);
    let mut loops = vec![0.0; k];
    let mut weights: HashMap<(usize, usize), f64> = HashMap::new();
    for (i, nbrs) in level.adj.iter().enumerate() {
        let ci = relabel[i];
        loops[ci] += level.loops[i];
        for &(j, w) in nbrs {
            if j < i {
                continue;
            }
            let cj = relabel[j];
            if ci == cj {
                loops[ci] += w;
            } else {
                *weights.entry((ci.min(cj), ci.max(cj))).or_insert(0.0) += w;
            }
        }
    }
    let mut pairs: Vec<_> = weights.into_iter().collect();
    pairs.sort_by_key(|p| p.0);
    let mut adj = vec![Vec::new(); k];
    for ((a, b), w) in pairs {
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    (Level { adj, loops }, relabel)
}

/// Multi-level Louvain over an edge list. The visiting order of each level
/// is shuffled by a generator seeded with `seed`.
pub fn louvain_assign(
    n: usize,
    edges: &[(usize, usize, f64)],
    seed: u64,
    gamma: f64,
) -> LouvainOutcome {
    let singletons: Vec<usize> = (0..n).collect();
    let m: f64 = edges.iter().map(|e| e.2).sum();
    let q0 = modularity(n, edges, &singletons, gamma);
    if n == 0 || m <= 0.0 {
        return LouvainOutcome {
            assignment: singletons,
            modularity: q0,
            trace: vec![q0],
        };
    }

    let mut adj = vec![Vec::new(); n];
    for &(u, v, w) in edges {
        if u != v && w > 0.0 {
            adj[u].push((v, w));
            adj[v].push((u, w));
        }
    }
    let mut level = Level {
        adj,
        loops: vec![0.0; n],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut membership = singletons;
    let mut trace = vec![q0];

    loop {
        let (comm, changed) = local_moves(&level, m, gamma, &mut rng);
        let (next, relabel) = aggregate(&level, &comm);
        for c in membership.iter_mut() {
            *c = relabel[*c];
        }
        let q = modularity(n, edges, &membership, gamma);
        let prev = *trace.last().expect("trace starts non-empty");
        debug_assert!(
            q >= prev - 1e-9,
            "modularity decreased across levels: {prev} -> {q}"
        );
        trace.push(q);
        if !changed {
            break;
        }
        level = next;
    }

    let assignment = canonicalize(&membership);
    let modularity = *trace.last().expect("trace starts non-empty");
    LouvainOutcome {
        assignment,
        modularity,
        trace,
    }
}

/// Clusters a graph and returns its synsets (virtual lexicon nodes removed).
/// Synsets are ordered by their most frequent member; ids are
/// `{property}#{index}`.
pub fn louvain(graph: &SimilarityGraph, seed: u64, resolution: f64) -> Result<Vec<Synset>> {
    if graph.nodes.is_empty() {
        return Err(Error::domain("cannot cluster an empty graph"));
    }
    if resolution.is_nan() || resolution <= 0.0 {
        return Err(Error::config("resolution must be positive"));
    }
    let outcome = louvain_assign(graph.nodes.len(), &graph.weighted_edges(), seed, resolution);
    Ok(partition_to_synsets(graph, &outcome.assignment))
}

pub fn partition_to_synsets(graph: &SimilarityGraph, assignment: &[usize]) -> Vec<Synset> {
    let k = assignment.iter().copied().max().map_or(0, |c| c + 1);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (node, &c) in assignment.iter().enumerate() {
        if graph.nodes[node].kind == NodeKind::Value {
            groups[c].push(node);
        }
    }
    let mut groups: Vec<Vec<usize>> = groups.into_iter().filter(|g| !g.is_empty()).collect();
    for g in &mut groups {
        g.sort_by(|&a, &b| {
            let (na, nb) = (&graph.nodes[a], &graph.nodes[b]);
            nb.freq.cmp(&na.freq).then_with(|| na.label.cmp(&nb.label))
        });
    }
    groups.sort_by(|a, b| {
        let (na, nb) = (&graph.nodes[a[0]], &graph.nodes[b[0]]);
        nb.freq.cmp(&na.freq).then_with(|| na.label.cmp(&nb.label))
    });
    groups
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            Synset::mined(
                format!("{}#{i}", graph.property),
                &graph.property,
                g.into_iter()
                    .map(|n| Member::new(graph.nodes[n].label.clone(), graph.nodes[n].freq))
                    .collect(),
            )
        })
        .collect()
}

pub const BRUTE_FORCE_LIMIT: usize = 10;

/// Exhaustive maximum-modularity partition (oracle for small graphs).
///
/// Partitions are enumerated as restricted growth strings in lexicographic
/// order and only a strictly better modularity replaces the incumbent, so
/// ties resolve to the lexicographically smallest encoding.
pub fn brute_force_assign(n: usize, edges: &[(usize, usize, f64)], gamma: f64) -> Result<(Vec<usize>, f64)> {
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            nodes: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let mut rgs = vec![0usize; n];
    let mut best = (rgs.clone(), modularity(n, edges, &rgs, gamma));
    while next_rgs(&mut rgs) {
        let q = modularity(n, edges, &rgs, gamma);
        if q > best.1 + 1e-12 {
            best = (rgs.clone(), q);
        }
    }
    Ok(best)
}

/// Advances a restricted growth string to its lexicographic successor.
/// Returns false after the last one (all distinct labels).
fn next_rgs(rgs: &mut [usize]) -> bool {
    for i in (1..rgs.len()).rev() {
        let max_prefix = rgs[..i].iter().copied().max().unwrap_or(0);
        if rgs[i] <= max_prefix {
            rgs[i] += 1;
            for x in rgs.iter_mut().skip(i + 1) {
                *x = 0;
            }
            return true;
        }
    }
    false
}

/// [`brute_force_assign`] on a similarity graph.
pub fn brute_force_partition(graph: &SimilarityGraph, resolution: f64) -> Result<Vec<Synset>> {
    let (assignment, _) = brute_force_assign(graph.nodes.len(), &graph.weighted_edges(), resolution)?;
    Ok(partition_to_synsets(graph, &assignment))
}
