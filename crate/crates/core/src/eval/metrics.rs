//! Precision, recall and average precision of ranked lists.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::{EmbeddingIndex, RankedList};

/// The videos that count as correct answers for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceJudgment {
    pub query_id: String,
    pub relevant: BTreeSet<String>,
}

impl RelevanceJudgment {
    pub fn new(query_id: impl Into<String>, relevant: impl IntoIterator<Item = String>) -> Self {
        Self {
            query_id: query_id.into(),
            relevant: relevant.into_iter().collect(),
        }
    }

    /// Every indexed video whose cluster label equals `label`.
    pub fn same_cluster(query_id: impl Into<String>, label: usize, index: &EmbeddingIndex) -> Self {
        Self::new(
            query_id,
            index
                .entries()
                .iter()
                .filter(|e| e.label == label)
                .map(|e| e.video_id.clone()),
        )
    }

    fn count(&self) -> Result<usize> {
        match self.relevant.len() {
            0 => Err(Error::Scoring(format!("query {} has no relevant videos", self.query_id))),
            r => Ok(r),
        }
    }

    pub fn is_relevant(&self, video_id: &str) -> bool {
        self.relevant.contains(video_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub size: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Precision and recall of the top-`s` results at each output size `s`.
pub fn precision_recall(ranked: &RankedList, judgment: &RelevanceJudgment, sizes: &[usize]) -> Result<Vec<PrPoint>> {
    let total = judgment.count()? as f64;
    if sizes.first() == Some(&0) || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("output sizes must be positive and strictly ascending".into()));
    }
    let mut out = Vec::with_capacity(sizes.len());
    let mut hits = 0usize;
    let mut seen = 0usize;
    for &s in sizes {
        while seen < s.min(ranked.items.len()) {
            if judgment.is_relevant(&ranked.items[seen].0) {
                hits += 1;
            }
            seen += 1;
        }
        out.push(PrPoint {
            size: s,
            precision: hits as f64 / s as f64,
            recall: hits as f64 / total,
        });
    }
    Ok(out)
}

/// `AP = (1/R) Σ_{i ≤ N} p(i)·rel(i)`; `depth` is `N` and defaults to the list length.
pub fn average_precision(ranked: &RankedList, judgment: &RelevanceJudgment, depth: Option<usize>) -> Result<f64> {
    let total = judgment.count()? as f64;
    let n = depth.unwrap_or(ranked.items.len());
    if n > ranked.items.len() {
        return Err(Error::Argument(format!(
            "AP depth {n} exceeds the ranked list length {}",
            ranked.items.len()
        )));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, (id, _)) in ranked.items[..n].iter().enumerate() {
        if judgment.is_relevant(id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / total)
}

pub fn mean_ap(aps: &[f64]) -> Result<f64> {
    if aps.is_empty() {
        return Err(Error::Scoring("MAP of zero queries".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Output sizes `1, 1 + stride, …` capped at `max`, always ending at `max`.
pub fn output_sizes(max: usize, stride: usize) -> Vec<usize> {
    if max == 0 {
        return Vec::new();
    }
    let mut sizes: Vec<usize> = (1..=max).step_by(stride.max(1)).collect();
    if sizes.last() != Some(&max) {
        sizes.push(max);
    }
    sizes
}

pub fn pr_to_csv(points: &[PrPoint]) -> String {
    let mut out = String::from("size,precision,recall\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.size, p.precision, p.recall));
    }
    out
}

pub fn pr_from_csv(text: &str) -> Result<Vec<PrPoint>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("size,precision,recall") {
        return Err(Error::Format("PR curve CSV must start with size,precision,recall".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = || Error::Format(format!("PR curve CSV row {}: {line:?}", i + 2));
            let mut cols = line.split(',');
            let mut next = || cols.next().map(str::trim).ok_or_else(bad);
            let size = next()?.parse().map_err(|_| bad())?;
            let precision = next()?.parse().map_err(|_| bad())?;
            let recall = next()?.parse().map_err(|_| bad())?;
            Ok(PrPoint { size, precision, recall })
        })
        .collect()
}

pub fn pr_curve_export(points: &[PrPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, pr_to_csv(points)).map_err(|e| Error::io(path, e))
}

pub fn pr_curve_import(path: impl AsRef<Path>) -> Result<Vec<PrPoint>> {
    let path = path.as_ref();
    pr_from_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(rel: &[bool]) -> (RankedList, RelevanceJudgment) {
        let items: Vec<(String, f64)> = (0..rel.len()).map(|i| (format!("v{i}"), 1.0 - i as f64 * 0.01)).collect();
        let relevant = rel
            .iter()
            .enumerate()
            .filter(|(_, &r)| r)
            .map(|(i, _)| format!("v{i}"));
        (
            RankedList {
                query_id: "q".into(),
                items,
            },
            RelevanceJudgment::new("q", relevant),
        )
    }

    #[test]
    fn perfect_prefix_scores_one() {
        let (l, j) = list(&[true, true, false]);
        assert_eq!(average_precision(&l, &j, None).unwrap(), 1.0);
    }

    #[test]
    fn interleaved_pattern() {
        let (l, j) = list(&[false, true, false, true]);
        assert_eq!(average_precision(&l, &j, None).unwrap(), 0.5);
    }

    #[test]
    fn empty_relevant_set_is_a_scoring_error() {
        let (l, j) = list(&[false, false]);
        assert!(matches!(average_precision(&l, &j, None), Err(Error::Scoring(_))));
        assert!(matches!(precision_recall(&l, &j, &[1]), Err(Error::Scoring(_))));
    }

    #[test]
    fn truncated_depth() {
        let (l, j) = list(&[false, true, false, true]);
        assert_eq!(average_precision(&l, &j, Some(2)).unwrap(), 0.25);
        assert!(average_precision(&l, &j, Some(5)).is_err());
    }

    #[test]
    fn precision_recall_points() {
        let (l, j) = list(&[true, true, false, true, false]);
        let pts = precision_recall(&l, &j, &[1, 2, 3, 5]).unwrap();
        assert_eq!((pts[0].precision, pts[0].recall), (1.0, 1.0 / 3.0));
        assert_eq!((pts[1].precision, pts[1].recall), (1.0, 2.0 / 3.0));
        assert_eq!((pts[2].precision, pts[2].recall), (2.0 / 3.0, 2.0 / 3.0));
        assert_eq!((pts[3].precision, pts[3].recall), (0.6, 1.0));
        assert!(precision_recall(&l, &j, &[2, 2]).is_err());
        let (l, j) = list(&[false, false, true]);
        let pts = precision_recall(&l, &j, &[1, 2]).unwrap();
        assert!(pts.iter().all(|p| p.precision == 0.0 && p.recall == 0.0));
    }

    #[test]
    fn map_is_the_mean() {
        assert_eq!(mean_ap(&[0.7]).unwrap(), 0.7);
        assert!((mean_ap(&[0.2, 0.4]).unwrap() - 0.3).abs() < 1e-15);
        assert!(mean_ap(&[]).is_err());
    }

    #[test]
    fn sizes_grid() {
        assert_eq!(output_sizes(10, 4), vec![1, 5, 9, 10]);
        assert_eq!(output_sizes(3, 1), vec![1, 2, 3]);
        assert!(output_sizes(0, 1).is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let pts = vec![
            PrPoint { size: 1, precision: 1.0, recall: 0.1 },
            PrPoint { size: 2, precision: 0.5, recall: 1.0 / 3.0 },
            PrPoint { size: 3, precision: 2.0 / 3.0, recall: 0.2 },
        ];
        let text = pr_to_csv(&pts);
        assert_eq!(text.lines().count(), 4);
        assert_eq!(pr_from_csv(&text).unwrap(), pts);
        assert!(pr_from_csv("a,b,c\n").is_err());
    }
}
