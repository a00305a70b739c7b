//! Seed-exemplar files and cluster-assignment exports.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The ten emotion categories, in centroid order.
pub const CATEGORIES: [&str; 10] = [
    "angry", "tender", "bitter", "cheerful", "fun", "bright", "happy", "anxious", "calm", "warm",
];

/// Exemplar video ids per named category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedsFile {
    pub categories: BTreeMap<String, Vec<String>>,
}

impl SeedsFile {
    /// Names the `i`-th exemplar list after `CATEGORIES[i]` (or `cluster_i` beyond ten).
    pub fn from_groups(groups: Vec<Vec<String>>) -> Self {
        let categories = groups
            .into_iter()
            .enumerate()
            .map(|(i, ids)| (category_name(i), ids))
            .collect();
        Self { categories }
    }

    /// Exemplar lists in centroid order.
    pub fn ordered(&self) -> Result<Vec<(String, Vec<String>)>> {
        let mut out = Vec::with_capacity(self.categories.len());
        for i in 0..self.categories.len() {
            let name = category_name(i);
            let ids = self
                .categories
                .get(&name)
                .ok_or_else(|| Error::Validation(format!("seeds file lacks category {name}")))?;
            if ids.is_empty() {
                return Err(Error::Validation(format!("category {name} has no exemplars")));
            }
            out.push((name, ids.clone()));
        }
        Ok(out)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(&self.categories)?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            categories: serde_json::from_str(&text)?,
        })
    }
}

pub fn category_name(i: usize) -> String {
    CATEGORIES
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("cluster_{i}"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub video_id: String,
    pub label: usize,
}

pub fn write_assignments(path: impl AsRef<Path>, rows: &[Assignment]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_assignments(path: impl AsRef<Path>) -> Result<Vec<Assignment>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
