mod common;

use std::collections::{BTreeMap, HashMap};

use common::{ADDRESS, BIRTHDAY, GENDER, SPOUSE, STATUS};
use synmine::ingest::{PropertyIndex, ValueMultiset};
use synmine::selection::{pcp_score, rank_properties, select_properties, wordpiece_distribution, Direction};
use synmine::wordpiece::{build_table, build_table_with, LrEntMode, Neighbor, PmiNormalization, StatsOptions};

fn entropy_bits(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum()
}

/// Every substring occurrence of 1..=max_len chars, weighted by frequency.
fn substrings(values: &ValueMultiset, max_len: usize) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for (v, f) in values.iter() {
        let chars: Vec<char> = v.chars().collect();
        for i in 0..chars.len() {
            for j in i + 1..=chars.len().min(i + max_len) {
                *out.entry(chars[i..j].iter().collect::<String>()).or_insert(0) += f;
            }
        }
    }
    out
}

/// Left and right neighbour histograms of `piece` by scanning every value.
fn neighbours(values: &ValueMultiset, piece: &str) -> (BTreeMap<Neighbor, u64>, BTreeMap<Neighbor, u64>) {
    let p: Vec<char> = piece.chars().collect();
    let (mut left, mut right) = (BTreeMap::new(), BTreeMap::new());
    for (v, f) in values.iter() {
        let c: Vec<char> = v.chars().collect();
        for i in 0..c.len() {
            if c.len() - i >= p.len() && c[i..i + p.len()] == p[..] {
                let l = if i == 0 { Neighbor::Boundary } else { Neighbor::Char(c[i - 1]) };
                let r = c.get(i + p.len()).map_or(Neighbor::Boundary, |&ch| Neighbor::Char(ch));
                *left.entry(l).or_insert(0) += f;
                *right.entry(r).or_insert(0) += f;
            }
        }
    }
    (left, right)
}

fn oracle_pcp(values: &ValueMultiset, max_len: usize) -> f64 {
    let counts: Vec<u64> = values.iter().map(|(_, c)| c).collect();
    let pieces: Vec<u64> = substrings(values, max_len).into_values().collect();
    let chars: u64 = values.iter().map(|(v, c)| v.chars().count() as u64 * c).sum();
    chars as f64 / (entropy_bits(&counts) * entropy_bits(&pieces)).max(1e-9)
}

#[test]
fn fixture_selection_prefers_categorical_properties() {
    let index = common::mini_kg_index();
    // score-then-sort with the direct formula
    let mut oracle: Vec<(f64, &str)> = index.iter().map(|(p, v)| (oracle_pcp(v, 6), p)).collect();
    oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let ranked = rank_properties(&index, Direction::HighestPcp, 6).unwrap();
    let names: Vec<&str> = ranked.iter().map(|s| s.predicate.as_str()).collect();
    assert_eq!(names, oracle.iter().map(|o| o.1).collect::<Vec<_>>());
    for (s, (pcp, _)) in ranked.iter().zip(&oracle) {
        assert!((s.pcp - pcp).abs() <= 1e-9 * pcp.abs(), "{} {} {}", s.predicate, s.pcp, pcp);
    }

    let top2 = select_properties(&index, 2, Direction::HighestPcp, 6).unwrap();
    let mut top2: Vec<&str> = top2.iter().map(|s| s.predicate.as_str()).collect();
    top2.sort();
    let mut expected = vec![GENDER, STATUS];
    expected.sort();
    assert_eq!(top2, expected);
    for rest in [ADDRESS, BIRTHDAY, SPOUSE] {
        assert!(names.iter().position(|n| *n == rest).unwrap() >= 2);
    }
}

#[test]
fn lowest_direction_reverses_ranking() {
    let index = common::mini_kg_index();
    let hi = rank_properties(&index, Direction::HighestPcp, 6).unwrap();
    let lo = rank_properties(&index, Direction::LowestPcp, 6).unwrap();
    let hi: Vec<_> = hi.iter().map(|s| &s.predicate).collect();
    let mut lo: Vec<_> = lo.iter().map(|s| &s.predicate).collect();
    lo.reverse();
    assert_eq!(hi, lo);
}

#[test]
fn single_property_selected_either_direction() {
    let mut index = PropertyIndex::new();
    index.insert("only", "a", 3);
    index.insert("only", "bc", 1);
    for d in [Direction::HighestPcp, Direction::LowestPcp] {
        let s = select_properties(&index, 1, d, 6).unwrap();
        assert_eq!(s[0].predicate, "only");
    }
}

#[test]
fn synthetic_gender_beats_address() {
    let gender: ValueMultiset = [("male", 500u64), ("female", 480), ("♂", 20)].into_iter().collect();
    let address: ValueMultiset = (0..1000).map(|i| (format!("{i} Main Street apt {}", i * 7 % 13), 1u64)).collect();
    let g = pcp_score("Gender", &gender, 6).unwrap();
    let a = pcp_score("Address", &address, 6).unwrap();
    assert!((g.pcp - oracle_pcp(&gender, 6)).abs() < 1e-9 * g.pcp);
    assert!((a.pcp - oracle_pcp(&address, 6)).abs() < 1e-9 * a.pcp);
    assert!(g.pcp > a.pcp, "{} vs {}", g.pcp, a.pcp);
    assert!((a.value_entropy - 1000f64.log2()).abs() < 1e-9);
}

#[test]
fn gender_wordpieces_match_brute_force() {
    let index = common::mini_kg_index();
    let gender = index.get(GENDER).unwrap();
    for max_len in 1..=6 {
        let got: BTreeMap<String, u64> = wordpiece_distribution(gender, max_len).into_iter().collect();
        assert_eq!(got, substrings(gender, max_len), "max_len {max_len}");
    }
}

#[test]
fn fixture_neighbours_match_scan() {
    let index = common::mini_kg_index();
    for property in [GENDER, STATUS, ADDRESS] {
        let values = index.get(property).unwrap();
        let table = build_table(property, values, 6).unwrap();
        for piece in substrings(values, 6).keys() {
            let (l, r) = neighbours(values, piece);
            let to_map = |h: &HashMap<Neighbor, u64>| h.iter().map(|(k, v)| (*k, *v)).collect::<BTreeMap<_, _>>();
            assert_eq!(to_map(table.left_neighbors(piece).unwrap()), l, "{piece}");
            assert_eq!(to_map(table.right_neighbors(piece).unwrap()), r, "{piece}");
        }
    }
}

#[test]
fn pause_piece_neighbour_entropy() {
    let index = common::mini_kg_index();
    let status = index.get(STATUS).unwrap();
    let (l, r) = neighbours(status, "暂停");
    // 暂停 x5, 暂停更新 x3, 已暂停 x2
    assert_eq!(l.values().sum::<u64>(), 10);
    assert_eq!(l.get(&Neighbor::Char('已')), Some(&2));
    assert_eq!(r.get(&Neighbor::Char('更')), Some(&3));
    let hl = entropy_bits(&l.values().copied().collect::<Vec<_>>());
    let hr = entropy_bits(&r.values().copied().collect::<Vec<_>>());
    let table = build_table(STATUS, status, 6).unwrap();
    let (tl, tr) = table.neighbor_entropies("暂停").unwrap();
    assert!((tl - hl).abs() < 1e-12 && (tr - hr).abs() < 1e-12);
    assert!((table.lr_entropy("暂停").unwrap() - hl.min(hr)).abs() < 1e-12);
    let avg = build_table_with(
        STATUS,
        status,
        6,
        StatsOptions {
            lrent_mode: LrEntMode::Avg,
            ..StatsOptions::default()
        },
    )
    .unwrap();
    assert!((avg.lr_entropy("暂停").unwrap() - 0.5 * (hl + hr)).abs() < 1e-12);
}

#[test]
fn always_cooccurring_pair_pmi_matches_counts() {
    let values: ValueMultiset = [("abab", 3u64), ("ab", 2), ("c", 1)].into_iter().collect();
    let subs = substrings(&values, 4);
    let class_total = |len: usize| -> u64 {
        subs.iter().filter(|(k, _)| k.chars().count() == len).map(|(_, v)| v).sum()
    };
    let p = |s: &str, total: u64| subs[s] as f64 / total as f64;
    let table = build_table("p", &values, 4).unwrap();
    let expected = (p("ab", class_total(2)) / (p("a", class_total(1)) * p("b", class_total(1)))).log2();
    assert!((table.pmi("a", "b").unwrap() - expected).abs() < 1e-12);

    let all: u64 = subs.values().sum();
    let table = build_table_with(
        "p",
        &values,
        4,
        StatsOptions {
            pmi_norm: PmiNormalization::AllPieces,
            ..StatsOptions::default()
        },
    )
    .unwrap();
    let expected = (p("ab", all) / (p("a", all) * p("b", all))).log2();
    assert!((table.pmi("a", "b").unwrap() - expected).abs() < 1e-12);
    // b is always preceded by a, but a is not always followed by b
    assert_ne!(table.pmi("a", "b").unwrap(), table.pmi("b", "a").unwrap());
}
