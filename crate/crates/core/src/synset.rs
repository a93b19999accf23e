//! Synsets and their JSONL representation.
//!
//! One record per line:
//!
//! ```text
//! {"synset_id":"Gender#0","property":"Gender","members":[{"value":"男","freq":40}],"origin":"mined"}
//! ```
//!
//! Expanded expressions are written as a second record with the same
//! `synset_id`, `"origin":"expanded"`, and per-member `host_value` and
//! `donor_core` provenance fields.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Mined,
    Expanded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub value: String,
    pub freq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host_value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub donor_core: Option<String>,
}

impl Member {
    pub fn new(value: impl Into<String>, freq: u64) -> Self {
        Self {
            value: value.into(),
            freq,
            host_value: None,
            donor_core: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Synset {
    pub synset_id: String,
    pub property: String,
    pub members: Vec<Member>,
    pub origin: Origin,
}

impl Synset {
    pub fn mined(synset_id: String, property: &str, members: Vec<Member>) -> Self {
        Self {
            synset_id,
            property: property.to_string(),
            members,
            origin: Origin::Mined,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = &str> + '_ {
        self.members.iter().map(|m| m.value.as_str())
    }

    /// Checks non-emptiness and member uniqueness.
    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::input(format!("synset {} has no members", self.synset_id)));
        }
        let mut seen = BTreeSet::new();
        for m in &self.members {
            if !seen.insert(m.value.as_str()) {
                return Err(Error::input(format!(
                    "synset {} lists `{}` twice",
                    self.synset_id, m.value
                )));
            }
        }
        Ok(())
    }
}

pub fn write_jsonl<W: Write>(mut w: W, synsets: &[Synset]) -> Result<()> {
    for s in synsets {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Synset>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Synset = serde_json::from_str(&line)
            .map_err(|e| Error::input(format!("synset line {}: {e}", n + 1)))?;
        s.validate()?;
        out.push(s);
    }
    Ok(out)
}
