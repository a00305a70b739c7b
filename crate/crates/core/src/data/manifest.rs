//! Dataset manifests stored as JSON lines.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    pub length_sec: u32,
    pub audio_path: String,
    pub visual_path: String,
    pub label: Option<usize>,
}

/// Inclusive range of video lengths in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthSpan {
    pub min_sec: u32,
    pub max_sec: u32,
}

impl LengthSpan {
    pub fn new(min_sec: u32, max_sec: u32) -> Result<Self> {
        if min_sec > max_sec {
            return Err(Error::Argument(format!("empty length span [{min_sec}, {max_sec}]")));
        }
        Ok(Self { min_sec, max_sec })
    }

    /// The nested spans 216±3, ±6, ±9, ±12 used to select dataset subsets.
    pub fn standard_spans() -> [LengthSpan; 4] {
        [3, 6, 9, 12].map(|d| LengthSpan {
            min_sec: 216 - d,
            max_sec: 216 + d,
        })
    }

    pub fn contains(&self, len: u32) -> bool {
        (self.min_sec..=self.max_sec).contains(&len)
    }

    pub fn is_within(&self, other: &LengthSpan) -> bool {
        other.min_sec <= self.min_sec && self.max_sec <= other.max_sec
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
    length_span: LengthSpan,
}

impl Manifest {
    /// Builds a manifest, rejecting duplicate ids and out-of-span lengths.
    pub fn new(entries: Vec<ManifestEntry>, length_span: LengthSpan) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.video_id.as_str()) {
                return Err(Error::Validation(format!("duplicate video id {}", e.video_id)));
            }
            if !length_span.contains(e.length_sec) {
                return Err(Error::Validation(format!(
                    "{} has length {} outside [{}, {}]",
                    e.video_id, e.length_sec, length_span.min_sec, length_span.max_sec
                )));
            }
        }
        Ok(Self { entries, length_span })
    }

    /// Builds a manifest whose span is the tightest one covering its entries.
    pub fn from_entries(entries: Vec<ManifestEntry>) -> Result<Self> {
        let min = entries.iter().map(|e| e.length_sec).min().unwrap_or(0);
        let max = entries.iter().map(|e| e.length_sec).max().unwrap_or(0);
        Self::new(entries, LengthSpan::new(min, max)?)
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn length_span(&self) -> LengthSpan {
        self.length_span
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.video_id.as_str()).collect()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let entries = parse_jsonl(text.as_bytes())?;
        Self::from_entries(entries)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl()?.as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let entries = parse_jsonl(BufReader::new(f))?;
        Self::from_entries(entries)
    }
}

fn parse_jsonl<R: BufRead>(reader: R) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Format(format!("manifest line {}: {e}", lineno + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("manifest line {}: {e}", lineno + 1)))?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Keeps the entries whose length lies in the closed `span`, preserving order.
pub fn filter_manifest(manifest: &Manifest, span: LengthSpan) -> Manifest {
    Manifest {
        entries: manifest
            .entries
            .iter()
            .filter(|e| span.contains(e.length_sec))
            .cloned()
            .collect(),
        length_span: span,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, len: u32) -> ManifestEntry {
        ManifestEntry {
            video_id: id.into(),
            length_sec: len,
            audio_path: format!("audio/{id}.fvsq"),
            visual_path: format!("visual/{id}.fvsq"),
            label: None,
        }
    }

    fn lengths(m: &Manifest) -> Vec<u32> {
        m.entries().iter().map(|e| e.length_sec).collect()
    }

    #[test]
    fn boundaries_are_inclusive() {
        let m = Manifest::from_entries(
            [210, 213, 216, 219, 222]
                .iter()
                .enumerate()
                .map(|(i, &l)| entry(&format!("v{i}"), l))
                .collect(),
        )
        .unwrap();
        let f = filter_manifest(&m, LengthSpan::new(213, 219).unwrap());
        assert_eq!(lengths(&f), vec![213, 216, 219]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = Manifest::from_entries(vec![entry("a", 216), entry("a", 217)]);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn jsonl_round_trip_with_null_label() {
        let mut e = entry("x", 216);
        let m = Manifest::from_entries(vec![e.clone()]).unwrap();
        let text = m.to_jsonl().unwrap();
        assert!(text.contains("\"label\":null"));
        assert_eq!(Manifest::from_jsonl(&text).unwrap(), m);
        e.label = Some(3);
        let m = Manifest::from_entries(vec![e]).unwrap();
        assert_eq!(Manifest::from_jsonl(&m.to_jsonl().unwrap()).unwrap(), m);
    }

    #[test]
    fn standard_spans_are_nested() {
        let spans = LengthSpan::standard_spans();
        assert_eq!(spans[0], LengthSpan::new(213, 219).unwrap());
        assert_eq!(spans[3], LengthSpan::new(204, 228).unwrap());
        for w in spans.windows(2) {
            assert!(w[0].is_within(&w[1]));
        }
    }
}
