//! Seeded k-fold cross-validation of a retrieval method.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{average_precision, mean_ap, output_sizes, precision_recall, PrPoint, RelevanceJudgment};
use crate::cca::{KernelModel, LinearProjection, Side};
use crate::deep::DeepModel;
use crate::error::{Error, Result};
use crate::linalg::select_rows;
use crate::retrieval::build_index;
use crate::seed::{derive_seed, derived_rng};

/// A fitted model that maps either view into the shared space.
pub trait Embedder {
    fn embed(&self, features: &DMatrix<f64>, side: Side) -> Result<DMatrix<f64>>;
}

impl Embedder for LinearProjection {
    fn embed(&self, features: &DMatrix<f64>, side: Side) -> Result<DMatrix<f64>> {
        self.project(features, side)
    }
}

impl Embedder for KernelModel {
    fn embed(&self, features: &DMatrix<f64>, side: Side) -> Result<DMatrix<f64>> {
        self.project(features, side)
    }
}

impl Embedder for DeepModel {
    fn embed(&self, features: &DMatrix<f64>, side: Side) -> Result<DMatrix<f64>> {
        DeepModel::embed(self, features, side)
    }
}

/// Something that can be fitted on a training corpus.
pub trait Trainer {
    fn fit(&self, train: &Corpus, seed: u64) -> Result<Box<dyn Embedder>>;

    /// Settings echoed into reports.
    fn describe(&self) -> serde_json::Value;
}

/// Row-aligned video-level features with cluster labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub ids: Vec<String>,
    pub audio: DMatrix<f64>,
    pub visual: DMatrix<f64>,
    pub labels: Vec<usize>,
}

impl Corpus {
    pub fn new(ids: Vec<String>, audio: DMatrix<f64>, visual: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        let n = ids.len();
        if audio.nrows() != n || visual.nrows() != n || labels.len() != n {
            return Err(Error::Validation(format!(
                "corpus has {n} ids, {} audio rows, {} visual rows and {} labels",
                audio.nrows(),
                visual.nrows(),
                labels.len()
            )));
        }
        Ok(Self { ids, audio, visual, labels })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            audio: select_rows(&self.audio, rows),
            visual: select_rows(&self.visual, rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn clusters(&self) -> BTreeSet<usize> {
        self.labels.iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    /// Step between PR output sizes.
    pub stride: usize,
    /// `N` of the AP sum; the full held-out index when absent.
    pub ap_depth: Option<usize>,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            stride: 1,
            ap_depth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query_id: String,
    pub fold: usize,
    pub ap: f64,
    #[serde(skip)]
    pub pr: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: serde_json::Value,
    /// Mean of the per-fold MAPs.
    pub map: f64,
    pub fold_maps: Vec<f64>,
    pub queries: Vec<QueryScore>,
    /// Per-query precision and recall averaged at each output size.
    pub pr_points: Vec<PrPoint>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Seeded random partition of `0..n` into `folds` near-equal parts.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Argument(format!("need at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(Error::Argument(format!("{n} items cannot fill {folds} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut derived_rng(seed, &[FOLD_TAG]));
    let mut parts = vec![Vec::new(); folds];
    for (k, i) in order.into_iter().enumerate() {
        parts[k % folds].push(i);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

const FOLD_TAG: u64 = 0x464f;

fn census(corpus: &Corpus, rows: &[usize]) -> Vec<usize> {
    let k = corpus.labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0; k];
    for &i in rows {
        counts[corpus.labels[i]] += 1;
    }
    counts
}

/// Trains on all but one fold, queries the held-out audio against the
/// held-out videos, and averages MAP over folds.
pub fn cross_validate(corpus: &Corpus, trainer: &dyn Trainer, opts: &CvOptions) -> Result<EvalReport> {
    let parts = fold_assignment(corpus.len(), opts.folds, opts.seed)?;
    let clusters = corpus.clusters();
    for (f, part) in parts.iter().enumerate() {
        let counts = census(corpus, part);
        if clusters.iter().any(|&c| counts[c] == 0) {
            return Err(Error::Validation(format!(
                "held-out fold {f} is missing clusters; per-cluster counts {counts:?}"
            )));
        }
    }
    let max_size = parts.iter().map(Vec::len).min().unwrap_or(0);
    let sizes = output_sizes(max_size, opts.stride);

    let mut queries = Vec::new();
    let mut fold_maps = Vec::with_capacity(parts.len());
    for (f, held) in parts.iter().enumerate() {
        let train_rows: Vec<usize> = parts
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, p)| p.iter().copied())
            .collect();
        let mut train_rows = train_rows;
        train_rows.sort_unstable();
        let model = trainer.fit(&corpus.subset(&train_rows), derive_seed(opts.seed, &[FIT_TAG, f as u64]))?;
        let test = corpus.subset(held);
        let fold_queries = score_fold(&test, model.as_ref(), &sizes, opts.ap_depth, f)?;
        let aps: Vec<f64> = fold_queries.iter().map(|q| q.ap).collect();
        fold_maps.push(mean_ap(&aps)?);
        queries.extend(fold_queries);
    }

    let pr_points = sizes
        .iter()
        .enumerate()
        .map(|(i, &size)| {
            let n = queries.len() as f64;
            PrPoint {
                size,
                precision: queries.iter().map(|q| q.pr[i].precision).sum::<f64>() / n,
                recall: queries.iter().map(|q| q.pr[i].recall).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(EvalReport {
        config: serde_json::json!({
            "method": trainer.describe(),
            "folds": opts.folds,
            "seed": opts.seed,
            "stride": opts.stride,
            "ap_depth": opts.ap_depth,
        }),
        map: mean_ap(&fold_maps)?,
        fold_maps,
        queries,
        pr_points,
    })
}

const FIT_TAG: u64 = 0x4649;

/// Scores every audio of `test` as a query against all of its videos.
pub fn score_fold(
    test: &Corpus,
    model: &dyn Embedder,
    sizes: &[usize],
    ap_depth: Option<usize>,
    fold: usize,
) -> Result<Vec<QueryScore>> {
    let ea = model.embed(&test.audio, Side::Audio)?;
    let ev = model.embed(&test.visual, Side::Visual)?;
    let rows = |m: &DMatrix<f64>| -> Vec<DVector<f64>> { m.row_iter().map(|r| r.transpose()).collect() };
    let index = build_index(&rows(&ev), &test.labels, &test.ids)?;
    let mut out = Vec::with_capacity(test.len());
    for (i, q) in rows(&ea).iter().enumerate() {
        let ranked = index.rank(&test.ids[i], q.as_slice(), index.len())?;
        let judgment = RelevanceJudgment::same_cluster(&test.ids[i], test.labels[i], &index);
        out.push(QueryScore {
            query_id: test.ids[i].clone(),
            fold,
            ap: average_precision(&ranked, &judgment, ap_depth)?,
            pr: precision_recall(&ranked, &judgment, sizes)?,
        });
    }
    Ok(out)
}
