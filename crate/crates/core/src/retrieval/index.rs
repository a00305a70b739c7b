//! Embedding index with cached norms and exhaustive ranking.
//!
//! On disk an index is a directory-free single file:
//!
//! ```text
//! line 1: JSON header {"format":"avembed-index","version":1,"r":R,"count":N}
//! N·R f64 little-endian values (row-major embeddings)
//! N JSON lines {"video_id":…,"label":…}
//! ```

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `a·b / (‖a‖·‖b‖)`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!("vectors have widths {} and {}", a.len(), b.len())));
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok(dot(a, b) / (na * nb))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub video_id: String,
    pub label: usize,
    #[serde(skip)]
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    r: usize,
    entries: Vec<IndexEntry>,
    norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    /// `(video_id, similarity)`, most similar first.
    pub items: Vec<(String, f64)>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|(id, _)| id.as_str())
    }
}

/// Builds an index from row embeddings with aligned labels and ids.
pub fn build_index(embeddings: &[DVector<f64>], labels: &[usize], ids: &[String]) -> Result<EmbeddingIndex> {
    if embeddings.len() != labels.len() || embeddings.len() != ids.len() {
        return Err(Error::Validation(format!(
            "{} embeddings, {} labels and {} ids",
            embeddings.len(),
            labels.len(),
            ids.len()
        )));
    }
    let r = embeddings.first().map_or(0, |e| e.len());
    let entries = embeddings
        .iter()
        .zip(labels)
        .zip(ids)
        .map(|((e, &label), id)| IndexEntry {
            video_id: id.clone(),
            label,
            embedding: e.iter().cloned().collect(),
        })
        .collect();
    EmbeddingIndex::from_entries(r, entries)
}

impl EmbeddingIndex {
    pub fn from_entries(r: usize, entries: Vec<IndexEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.video_id.as_str()) {
                return Err(Error::Validation(format!("duplicate video id {}", e.video_id)));
            }
            if e.embedding.len() != r {
                return Err(Error::Validation(format!(
                    "embedding of {} has width {}, index width is {r}",
                    e.video_id,
                    e.embedding.len()
                )));
            }
            if e.embedding.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("embedding of {} is not finite", e.video_id)));
            }
        }
        let norms = entries.iter().map(|e| norm(&e.embedding)).collect();
        Ok(Self { r, entries, norms })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn label_of(&self, video_id: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.video_id == video_id).map(|e| e.label)
    }

    /// Top-`n` entries by cosine similarity; ties go to the smaller video id.
    pub fn rank(&self, query_id: &str, query: &[f64], n: usize) -> Result<RankedList> {
        if n == 0 {
            return Err(Error::Argument("output size must be at least 1".into()));
        }
        if self.entries.is_empty() {
            return Ok(RankedList {
                query_id: query_id.to_string(),
                items: Vec::new(),
            });
        }
        if query.len() != self.r {
            return Err(Error::Argument(format!("query width {} does not match index width {}", query.len(), self.r)));
        }
        let qn = norm(query);
        if qn == 0.0 {
            return Err(Error::UndefinedSimilarity);
        }
        let mut scored = self
            .entries
            .iter()
            .zip(&self.norms)
            .map(|(e, &en)| {
                if en == 0.0 {
                    return Err(Error::UndefinedSimilarity);
                }
                Ok((e.video_id.as_str(), dot(query, &e.embedding) / (qn * en)))
            })
            .collect::<Result<Vec<_>>>()?;
        let order = |a: &(&str, f64), b: &(&str, f64)| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(b.0));
        let n = n.min(scored.len());
        if n < scored.len() {
            scored.select_nth_unstable_by(n - 1, order);
            scored.truncate(n);
        }
        scored.sort_by(order);
        Ok(RankedList {
            query_id: query_id.to_string(),
            items: scored.into_iter().map(|(id, s)| (id.to_string(), s)).collect(),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::json!({
            "format": FORMAT,
            "version": VERSION,
            "r": self.r,
            "count": self.entries.len(),
        });
        let mut out = serde_json::to_vec(&header)?;
        out.push(b'\n');
        for e in &self.entries {
            for v in &e.embedding {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for e in &self.entries {
            out.extend(serde_json::to_vec(e)?);
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("index header is not terminated".into()))?;
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nl])
            .map_err(|e| Error::Format(format!("index header: {e}")))?;
        if header["format"] != FORMAT {
            return Err(Error::Format("not an embedding index".into()));
        }
        if header["version"].as_u64() != Some(VERSION) {
            return Err(Error::Format(format!("unsupported index version {}", header["version"])));
        }
        let field = |k: &str| {
            header[k]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| Error::Format(format!("index header lacks {k}")))
        };
        let (r, count) = (field("r")?, field("count")?);
        let body = &bytes[nl + 1..];
        let block = r
            .checked_mul(count)
            .and_then(|v| v.checked_mul(8))
            .filter(|&len| len <= body.len())
            .ok_or_else(|| Error::Corruption("embedding block is truncated".into()))?;
        let values: Vec<f64> = body[..block]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let table = std::str::from_utf8(&body[block..]).map_err(|_| Error::Corruption("id table is not UTF-8".into()))?;
        let mut entries = Vec::with_capacity(count);
        for (i, line) in table.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            let mut e: IndexEntry =
                serde_json::from_str(line).map_err(|err| Error::Corruption(format!("id table line {}: {err}", i + 1)))?;
            if i >= count {
                return Err(Error::Corruption("id table has more rows than the header count".into()));
            }
            e.embedding = values[i * r..(i + 1) * r].to_vec();
            entries.push(e);
        }
        if entries.len() != count {
            return Err(Error::Corruption(format!("id table has {} rows, header says {count}", entries.len())));
        }
        Self::from_entries(r, entries)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Free-function form of [`EmbeddingIndex::rank`].
pub fn rank(index: &EmbeddingIndex, query_id: &str, query: &[f64], n: usize) -> Result<RankedList> {
    index.rank(query_id, query, n)
}

const FORMAT: &str = "avembed-index";
const VERSION: u64 = 1;
