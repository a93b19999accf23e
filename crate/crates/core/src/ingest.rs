//! Streaming triple parsing and the per-predicate value index.
//!
//! Two line formats are accepted:
//!
//! * `tsv`: `subject<TAB>predicate<TAB>object`, extra fields ignored. Objects
//!   are always literals.
//! * `ntriples`: the subset `<iri> <iri> (<iri>|"literal") .`. Literal escapes
//!   (`\n`, `\t`, `\r`, `\"`, `\\`, `\uXXXX`, `\UXXXXXXXX`) are decoded. A
//!   trailing language tag or datatype IRI after a literal is accepted and
//!   discarded; blank nodes are not supported.
//!
//! Malformed lines never abort the stream. They are counted in
//! [`ParseStats`] and skipped. Blank lines and `#` comments are skipped
//! without being counted as malformed.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Whether an object refers to another entity or is a literal value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    EntityRef,
    Literal,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub object_kind: ObjectKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleFormat {
    #[default]
    Tsv,
    #[serde(rename = "ntriples", alias = "nt", alias = "ntriples_subset")]
    NTriples,
}

impl FromStr for TripleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tsv" => Ok(TripleFormat::Tsv),
            "ntriples" | "nt" | "ntriples_subset" => Ok(TripleFormat::NTriples),
            other => Err(Error::config(format!(
                "unknown triple format `{other}` (expected `tsv` or `ntriples`)"
            ))),
        }
    }
}

impl fmt::Display for TripleFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TripleFormat::Tsv => "tsv",
            TripleFormat::NTriples => "ntriples",
        })
    }
}

/// Line counters collected while parsing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseStats {
    pub lines: usize,
    pub triples: usize,
    pub malformed: usize,
    pub skipped: usize,
}

/// Trims surrounding whitespace and applies Unicode NFC normalization.
pub fn normalize_text(s: &str) -> String {
    s.trim().nfc().collect()
}

/// Iterator over the triples of a dump. Yields `Err` only for I/O failures.
pub struct TripleReader<R> {
    reader: R,
    format: TripleFormat,
    buf: String,
    stats: ParseStats,
}

/// Starts a single-pass parse of `reader` in the given format.
pub fn parse_triples<R: BufRead>(reader: R, format: TripleFormat) -> TripleReader<R> {
    TripleReader {
        reader,
        format,
        buf: String::new(),
        stats: ParseStats::default(),
    }
}

impl<R> TripleReader<R> {
    pub fn stats(&self) -> ParseStats {
        self.stats
    }
}

enum LineOutcome {
    Triple(Triple),
    Skip,
    Malformed,
}

impl<R: BufRead> Iterator for TripleReader<R> {
    type Item = Result<Triple>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.stats.lines += 1;
            let line = self.buf.trim_end_matches(['\n', '\r']);
            let outcome = match self.format {
                TripleFormat::Tsv => parse_tsv_line(line),
                TripleFormat::NTriples => parse_ntriples_line(line),
            };
            match outcome {
                LineOutcome::Triple(t) => {
                    self.stats.triples += 1;
                    return Some(Ok(t));
                }
                LineOutcome::Skip => self.stats.skipped += 1,
                LineOutcome::Malformed => self.stats.malformed += 1,
            }
        }
    }
}

fn make_triple(subject: &str, predicate: &str, object: &str, kind: ObjectKind) -> LineOutcome {
    let subject = normalize_text(subject);
    let predicate = normalize_text(predicate);
    let object = normalize_text(object);
    if subject.is_empty() || predicate.is_empty() || object.is_empty() {
        return LineOutcome::Malformed;
    }
    LineOutcome::Triple(Triple {
        subject,
        predicate,
        object,
        object_kind: kind,
    })
}

fn parse_tsv_line(line: &str) -> LineOutcome {
    if line.trim().is_empty() || line.starts_with('#') {
        return LineOutcome::Skip;
    }
    let mut fields = line.split('\t');
    match (fields.next(), fields.next(), fields.next()) {
        (Some(s), Some(p), Some(o)) => make_triple(s, p, o, ObjectKind::Literal),
        _ => LineOutcome::Malformed,
    }
}

fn parse_ntriples_line(line: &str) -> LineOutcome {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return LineOutcome::Skip;
    }
    let mut cur = Cursor { rest: trimmed };
    let parsed = (|| {
        let s = cur.iri()?;
        let p = cur.iri()?;
        cur.skip_ws();
        let (o, kind) = if cur.rest.starts_with('"') {
            let lit = cur.literal()?;
            cur.literal_suffix()?;
            (lit, ObjectKind::Literal)
        } else {
            (cur.iri()?, ObjectKind::EntityRef)
        };
        cur.skip_ws();
        cur.rest = cur.rest.strip_prefix('.')?;
        cur.skip_ws();
        cur.rest.is_empty().then_some((s, p, o, kind))
    })();
    match parsed {
        Some((s, p, o, kind)) => make_triple(&s, &p, &o, kind),
        None => LineOutcome::Malformed,
    }
}

struct Cursor<'a> {
    rest: &'a str,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start_matches([' ', '\t']);
    }

    fn iri(&mut self) -> Option<String> {
        self.skip_ws();
        let body = self.rest.strip_prefix('<')?;
        let end = body.find('>')?;
        let iri = &body[..end];
        if iri.is_empty() || iri.contains([' ', '<', '"']) {
            return None;
        }
        self.rest = &body[end + 1..];
        Some(iri.to_string())
    }

    fn literal(&mut self) -> Option<String> {
        let body = self.rest.strip_prefix('"')?;
        let mut out = String::new();
        let mut chars = body.char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.rest = &body[i + 1..];
                    return Some(out);
                }
                '\\' => {
                    let (_, esc) = chars.next()?;
                    match esc {
                        'n' => out.push('\n'),
                        't' => out.push('\t'),
                        'r' => out.push('\r'),
                        '"' => out.push('"'),
                        '\\' => out.push('\\'),
                        'u' | 'U' => {
                            let width = if esc == 'u' { 4 } else { 8 };
                            let mut code = 0u32;
                            for _ in 0..width {
                                let (_, h) = chars.next()?;
                                code = code * 16 + h.to_digit(16)?;
                            }
                            out.push(char::from_u32(code)?);
                        }
                        _ => return None,
                    }
                }
                _ => out.push(c),
            }
        }
        None
    }

    fn literal_suffix(&mut self) -> Option<()> {
        if let Some(tag) = self.rest.strip_prefix('@') {
            let end = tag
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
                .unwrap_or(tag.len());
            if end == 0 {
                return None;
            }
            self.rest = &tag[end..];
        } else if let Some(dt) = self.rest.strip_prefix("^^") {
            self.rest = dt;
            self.iri()?;
        }
        Some(())
    }
}

/// Multiset of value strings observed under one predicate.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValueMultiset {
    entries: BTreeMap<String, u64>,
}

impl ValueMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: impl Into<String>, count: u64) {
        if count == 0 {
            return;
        }
        *self.entries.entry(value.into()).or_insert(0) += count;
    }

    pub fn get(&self, value: &str) -> u64 {
        self.entries.get(value).copied().unwrap_or(0)
    }

    pub fn distinct_count(&self) -> usize {
        self.entries.len()
    }

    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Values in lexicographic order with their frequencies.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> + Clone + '_ {
        self.entries.iter().map(|(v, &c)| (v.as_str(), c))
    }

    pub fn entries(&self) -> &BTreeMap<String, u64> {
        &self.entries
    }

    /// Values ordered by frequency descending, then lexicographically.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }

    fn merge(&mut self, other: ValueMultiset) {
        for (v, c) in other.entries {
            *self.entries.entry(v).or_insert(0) += c;
        }
    }
}

impl<S: Into<String>> FromIterator<(S, u64)> for ValueMultiset {
    fn from_iter<I: IntoIterator<Item = (S, u64)>>(iter: I) -> Self {
        let mut m = ValueMultiset::new();
        for (v, c) in iter {
            m.add(v, c);
        }
        m
    }
}

/// Predicate → value multiset. Subjects are not retained.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PropertyIndex {
    properties: BTreeMap<String, ValueMultiset>,
    total_triples: u64,
}

impl PropertyIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, predicate: &str, value: &str, count: u64) {
        if count == 0 {
            return;
        }
        self.properties
            .entry(predicate.to_string())
            .or_default()
            .add(value, count);
        self.total_triples += count;
    }

    pub fn get(&self, predicate: &str) -> Option<&ValueMultiset> {
        self.properties.get(predicate)
    }

    /// Predicates in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &ValueMultiset)> + '_ {
        self.properties.iter().map(|(p, v)| (p.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.properties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.properties.is_empty()
    }

    pub fn total_triples(&self) -> u64 {
        self.total_triples
    }

    /// Merges a partial index (e.g. one built from another shard).
    /// Commutative and associative.
    pub fn merge(&mut self, other: PropertyIndex) {
        self.total_triples += other.total_triples;
        for (p, values) in other.properties {
            self.properties.entry(p).or_default().merge(values);
        }
    }

    /// Serializes as `{predicate: {value: count}}` with sorted keys.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(
            self.properties
                .iter()
                .map(|(p, v)| (p, v.entries()))
                .collect::<BTreeMap<_, _>>(),
        )
        .expect("string maps always serialize")
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.to_json())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: BTreeMap<String, BTreeMap<String, u64>> = serde_json::from_str(s)?;
        let mut index = PropertyIndex::new();
        for (p, values) in raw {
            for (v, c) in values {
                if c == 0 {
                    return Err(Error::input(format!(
                        "index entry {p}/{v} has zero frequency"
                    )));
                }
                index.insert(&p, &v, c);
            }
        }
        Ok(index)
    }
}

/// Records every object under its predicate with its multiplicity.
pub fn build_property_index<I>(triples: I) -> PropertyIndex
where
    I: IntoIterator<Item = Triple>,
{
    let mut index = PropertyIndex::new();
    for t in triples {
        index.insert(&t.predicate, &t.object, 1);
    }
    index
}

/// Parses a whole dump and builds its index, returning the parse counters too.
pub fn index_dump<R: BufRead>(reader: R, format: TripleFormat) -> Result<(PropertyIndex, ParseStats)> {
    let mut triples = parse_triples(reader, format);
    let mut index = PropertyIndex::new();
    for t in triples.by_ref() {
        let t = t?;
        index.insert(&t.predicate, &t.object, 1);
    }
    Ok((index, triples.stats()))
}
