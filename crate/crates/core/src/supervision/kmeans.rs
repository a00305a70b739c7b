//! K-means with centroids initialized from labelled seed sets.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    /// `[k × d]`, one centroid per row.
    pub centroids: DMatrix<f64>,
    pub labels: Vec<usize>,
    /// Within-cluster sum of squared distances for the final centroids.
    pub inertia: f64,
    /// Number of update rounds in which at least one label changed.
    pub iterations_run: usize,
    /// Inertia after each assignment step, then the final value.
    pub inertia_trace: Vec<f64>,
}

impl ClusterModel {
    /// Index of the nearest centroid; ties go to the lower index.
    pub fn predict(&self, x: &DVector<f64>) -> usize {
        nearest(&self.centroids, x.as_slice()).0
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

fn sq_dist(a: &[f64], b: impl Iterator<Item = f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &DMatrix<f64>, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.nrows() {
        let d = sq_dist(x, centroids.row(c).iter().cloned());
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn rows(features: &DMatrix<f64>) -> Vec<Vec<f64>> {
    features.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

/// Clusters the rows of `features` into `seeds.len()` groups.
///
/// Centroid `i` starts at the mean of `seeds[i]`. Assignment (squared
/// Euclidean, ties to the lower index) and mean updates alternate until no
/// label changes, the inertia improves by less than `tol`, or `max_iter`
/// rounds have run. A cluster that empties is re-seeded at the point farthest
/// from its former centroid.
pub fn seeded_kmeans(
    features: &DMatrix<f64>,
    seeds: &[Vec<DVector<f64>>],
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel> {
    let k = seeds.len();
    let (n, d) = features.shape();
    if k == 0 {
        return Err(Error::Argument("at least one seed set is required".into()));
    }
    if n < k {
        return Err(Error::Argument(format!("{n} points cannot form {k} clusters")));
    }
    let mut centroids = DMatrix::zeros(k, d);
    for (i, set) in seeds.iter().enumerate() {
        if set.is_empty() {
            return Err(Error::Argument(format!("seed set {i} is empty")));
        }
        let mut mean = DVector::zeros(d);
        for v in set {
            if v.len() != d {
                return Err(Error::Argument(format!(
                    "seed in set {i} has width {}, features have {d}",
                    v.len()
                )));
            }
            mean += v;
        }
        mean /= set.len() as f64;
        centroids.set_row(i, &mean.transpose());
    }
    let points = rows(features);

    let assign = |centroids: &DMatrix<f64>| -> (Vec<usize>, f64) {
        let mut labels = Vec::with_capacity(n);
        let mut inertia = 0.0;
        for p in &points {
            let (c, dist) = nearest(centroids, p);
            labels.push(c);
            inertia += dist;
        }
        (labels, inertia)
    };

    let (mut labels, mut inertia) = assign(&centroids);
    let mut trace = vec![inertia];
    let mut iterations_run = 0;
    for _ in 0..max_iter {
        update_centroids(&points, &mut labels, &mut centroids);
        let (next, next_inertia) = assign(&centroids);
        let changed = next != labels;
        let improvement = inertia - next_inertia;
        labels = next;
        inertia = next_inertia;
        trace.push(inertia);
        if !changed {
            break;
        }
        iterations_run += 1;
        if improvement < tol {
            break;
        }
    }
    update_centroids(&points, &mut labels, &mut centroids);
    let final_inertia: f64 = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, centroids.row(l).iter().cloned()))
        .sum();
    trace.push(final_inertia);
    Ok(ClusterModel {
        k,
        centroids,
        labels,
        inertia: final_inertia,
        iterations_run,
        inertia_trace: trace,
    })
}

/// Recomputes centroids as cluster means, re-seeding any empty cluster at the
/// point farthest from its former centroid (that point moves to the cluster).
fn update_centroids(points: &[Vec<f64>], labels: &mut [usize], centroids: &mut DMatrix<f64>) {
    let (k, d) = centroids.shape();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            break;
        };
        let former: Vec<f64> = centroids.row(empty).iter().cloned().collect();
        let mut far = (usize::MAX, f64::NEG_INFINITY);
        for (i, p) in points.iter().enumerate() {
            if sizes[labels[i]] <= 1 {
                continue;
            }
            let dist = sq_dist(p, former.iter().cloned());
            if dist > far.1 {
                far = (i, dist);
            }
        }
        if far.0 == usize::MAX {
            break;
        }
        labels[far.0] = empty;
    }
    let mut sums = DMatrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels.iter()) {
        for (j, v) in p.iter().enumerate() {
            sums[(l, j)] += v;
        }
        counts[l] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            let mean = sums.row(c) / counts[c] as f64;
            centroids.set_row(c, &mean);
        }
    }
}
