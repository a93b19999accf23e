#![allow(dead_code)]

use std::path::PathBuf;

use synmine::ingest::{index_dump, PropertyIndex, TripleFormat};

pub const GENDER: &str = "性别";
pub const STATUS: &str = "连载状态";
pub const ADDRESS: &str = "地址";
pub const BIRTHDAY: &str = "出生日期";
pub const SPOUSE: &str = "配偶";

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn mini_kg_text() -> String {
    std::fs::read_to_string(fixture("mini_kg.tsv")).unwrap()
}

pub fn mini_kg_index() -> PropertyIndex {
    index_dump(mini_kg_text().as_bytes(), TripleFormat::Tsv).unwrap().0
}

/// Rand Index by enumerating element pairs; element `i` stands for `w[i]`
/// copies, and copies of one element always share both clusters.
pub fn pair_enumeration_ri(a: &[usize], b: &[usize], w: &[u64]) -> f64 {
    let (mut agree, mut total) = (0u128, 0u128);
    for i in 0..a.len() {
        let wi = w[i] as u128;
        let own = wi * wi.saturating_sub(1) / 2;
        agree += own;
        total += own;
        for j in i + 1..a.len() {
            let pairs = wi * w[j] as u128;
            total += pairs;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += pairs;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        agree as f64 / total as f64
    }
}

/// Random labeling of `n` elements into at most `k` clusters.
pub fn random_labels(rng: &mut impl rand::Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..k.max(1))).collect()
}

/// Complete graph over `3 * size` nodes with intra weight 1.0 and inter 0.05,
/// node ids shuffled. Returns edges and the planted labels.
pub fn planted(rng: &mut impl rand::Rng, size: usize) -> (Vec<(usize, usize, f64)>, Vec<usize>) {
    let n = 3 * size;
    let mut perm: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), rng);
    let mut labels = vec![0; n];
    for (i, &p) in perm.iter().enumerate() {
        labels[p] = i / size;
    }
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            edges.push((u, v, if labels[u] == labels[v] { 1.0 } else { 0.05 }));
        }
    }
    (edges, labels)
}

/// Graph on 2..=`max_n` nodes, each pair joined with probability 1/2 and a
/// weight in [0.01, 1).
pub fn random_small_graph(rng: &mut impl rand::Rng, max_n: usize) -> (usize, Vec<(usize, usize, f64)>) {
    let n = rng.gen_range(2..=max_n);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(0.5) {
                edges.push((u, v, rng.gen_range(0.01..1.0)));
            }
        }
    }
    (n, edges)
}
