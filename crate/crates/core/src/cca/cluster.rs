//! CCA on cluster-expanded pairs.

use nalgebra::DMatrix;

use super::linear::{fit_cca_pairs, LinearProjection, Ridge};
use crate::error::{Error, Result};
use crate::supervision::{expand_pairs, PairSet};

/// Fits CCA after pairing each audio item with same-cluster visual items.
///
/// Expanded rows are never materialized; the moments are accumulated from
/// the pair list, which gives the same estimate as stacking `(X', Y')`.
pub fn fit_cluster_cca(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    labels: &[usize],
    f: f64,
    r: usize,
    reg: impl Into<Ridge>,
    seed: u64,
) -> Result<LinearProjection> {
    let pairs = cluster_pairs(x, y, labels, f, seed)?;
    fit_cca_pairs(x, y, &pairs.index_pairs(), r, reg)
}

pub(crate) fn cluster_pairs(x: &DMatrix<f64>, y: &DMatrix<f64>, labels: &[usize], f: f64, seed: u64) -> Result<PairSet> {
    if labels.len() != x.nrows() || labels.len() != y.nrows() {
        return Err(Error::Validation(format!(
            "{} labels for {} audio and {} visual rows",
            labels.len(),
            x.nrows(),
            y.nrows()
        )));
    }
    expand_pairs(labels, labels, f, seed, None)
}
