//! Kernel CCA in the dual with ridge regularization.
//!
//! With centered Gram matrices `Kx = Ex Λx Exᵀ` (likewise `Ky`), dual directions
//! `α = Ex a` are constrained by `αᵀ(Kx²/(n−1) + κ·Kx)α = 1`, which for a
//! linear kernel is exactly the primal constraint `wᵀ(Σ̂xx + κI)w = 1` with
//! `w = Xᵀα`. The problem reduces to an SVD of
//! `Dx Λx ExᵀEy Λy Dy / (n−1)`, where `D = (Λ²/(n−1) + κΛ)^{-1/2}`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linear::Side;
use crate::container::Container;
use crate::error::{Error, Result};
use crate::linalg::{scale_columns, sorted_svd, sorted_symmetric_eigen};

/// Kernel width used when none is given.
pub const DEFAULT_BETA: f64 = 0.4;
/// Largest training set accepted by default (the solve is O(n³)).
pub const DEFAULT_MAX_SAMPLES: usize = 2000;

/// Eigenvalues of the centered Gram matrix below `RANK_TOL · λ_max` are dropped.
const RANK_TOL: f64 = 1e-10;
/// Negative eigenvalues beyond `PSD_TOL · λ_max` are a numerical error.
const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// `k(a, b) = exp(−beta·‖a − b‖²)`.
    Gaussian { beta: f64 },
    /// `k(a, b) = a·b`.
    Linear,
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Gaussian { beta } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-beta * d2).exp()
            }
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        }
    }

    /// Gram matrix between the rows of `a` and the rows of `b`.
    pub fn gram(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let ra: Vec<Vec<f64>> = a.row_iter().map(|r| r.iter().cloned().collect()).collect();
        let rb: Vec<Vec<f64>> = b.row_iter().map(|r| r.iter().cloned().collect()).collect();
        DMatrix::from_fn(ra.len(), rb.len(), |i, j| self.eval(&ra[i], &rb[j]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KccaConfig {
    pub kernel: Kernel,
    pub kappa: f64,
    pub max_samples: usize,
}

impl Default for KccaConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Gaussian { beta: DEFAULT_BETA },
            kappa: 1e-3,
            max_samples: DEFAULT_MAX_SAMPLES,
        }
    }
}

/// Centering statistics of a training Gram matrix.
#[derive(Debug, Clone, PartialEq)]
struct GramCentering {
    col_means: DVector<f64>,
    total_mean: f64,
}

impl GramCentering {
    fn of(k: &DMatrix<f64>) -> Self {
        let n = k.nrows() as f64;
        let col_means = DVector::from_iterator(k.ncols(), k.column_iter().map(|c| c.sum() / n));
        let total_mean = col_means.sum() / k.ncols() as f64;
        Self { col_means, total_mean }
    }

    /// Centers rows of a test Gram matrix against the training feature mean.
    fn apply(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = k.clone();
        for i in 0..k.nrows() {
            let row_mean = k.row(i).sum() / k.ncols() as f64;
            for j in 0..k.ncols() {
                out[(i, j)] += self.total_mean - self.col_means[j] - row_mean;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    pub x_train: DMatrix<f64>,
    pub y_train: DMatrix<f64>,
    /// Dual coefficients of the audio view, `[n × r]`.
    pub coef_x: DMatrix<f64>,
    /// Dual coefficients of the visual view, `[n × r]`.
    pub coef_y: DMatrix<f64>,
    pub kernel: Kernel,
    pub kappa: f64,
    pub correlations: DVector<f64>,
    center_x: GramCentering,
    center_y: GramCentering,
}

struct DualBasis {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

fn dual_basis(k: &DMatrix<f64>, what: &str) -> Result<DualBasis> {
    let (values, vectors) = sorted_symmetric_eigen(k);
    let max = values.iter().cloned().fold(0.0_f64, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) {
        return Err(Error::Numerical(format!("{what} Gram matrix is zero after centering")));
    }
    if min < -PSD_TOL * max {
        return Err(Error::Numerical(format!(
            "{what} Gram matrix is not PSD after centering (eigenvalue {min:.3e})"
        )));
    }
    let keep = values.iter().take_while(|&&v| v > RANK_TOL * max).count();
    Ok(DualBasis {
        vectors: vectors.columns(0, keep).into_owned(),
        values: values.rows(0, keep).into_owned(),
    })
}

fn center_gram(k: &DMatrix<f64>) -> DMatrix<f64> {
    let c = GramCentering::of(k);
    let mut out = c.apply(k);
    crate::linalg::symmetrize(&mut out);
    out
}

/// Gaussian-kernel CCA with width `beta` and ridge `kappa`.
pub fn fit_kcca(x: &DMatrix<f64>, y: &DMatrix<f64>, r: usize, beta: f64, kappa: f64) -> Result<KernelModel> {
    if !(beta > 0.0) {
        return Err(Error::Argument(format!("kernel width must be positive, got {beta}")));
    }
    fit_kcca_with(
        x,
        y,
        r,
        &KccaConfig {
            kernel: Kernel::Gaussian { beta },
            kappa,
            ..KccaConfig::default()
        },
    )
}

pub fn fit_kcca_with(x: &DMatrix<f64>, y: &DMatrix<f64>, r: usize, cfg: &KccaConfig) -> Result<KernelModel> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::Argument(format!("views have {n} and {} rows", y.nrows())));
    }
    if n > cfg.max_samples {
        return Err(Error::Resource(format!(
            "kernel CCA on {n} samples exceeds the cap of {}; subsample the training set or raise the cap",
            cfg.max_samples
        )));
    }
    if n < 2 {
        return Err(Error::Argument("kernel CCA needs at least two samples".into()));
    }
    if !(cfg.kappa > 0.0) {
        return Err(Error::Argument(format!("kappa must be positive, got {}", cfg.kappa)));
    }
    let kx_raw = cfg.kernel.gram(x, x);
    let ky_raw = cfg.kernel.gram(y, y);
    let center_x = GramCentering::of(&kx_raw);
    let center_y = GramCentering::of(&ky_raw);
    let bx = dual_basis(&center_gram(&kx_raw), "audio")?;
    let by = dual_basis(&center_gram(&ky_raw), "visual")?;
    let rank = bx.values.len().min(by.values.len());
    if r == 0 || r > rank {
        return Err(Error::Argument(format!("r = {r} must be in 1..={rank}")));
    }
    let denom = (n - 1) as f64;
    let whiten = |values: &DVector<f64>| values.map(|l| 1.0 / (l * l / denom + cfg.kappa * l).sqrt());
    let dx = whiten(&bx.values);
    let dy = whiten(&by.values);
    let left = bx.values.component_mul(&dx);
    let right = by.values.component_mul(&dy);
    let overlap = bx.vectors.transpose() * &by.vectors;
    let mut t = overlap;
    for i in 0..t.nrows() {
        for j in 0..t.ncols() {
            t[(i, j)] *= left[i] * right[j] / denom;
        }
    }
    let (u, s, v) = sorted_svd(&t)?;
    let coef_x = scale_columns(&bx.vectors, &dx) * u.columns(0, r);
    let coef_y = scale_columns(&by.vectors, &dy) * v.columns(0, r);
    let correlations = DVector::from_iterator(r, s.iter().take(r).map(|&c| c.clamp(0.0, 1.0)));
    if coef_x.iter().chain(coef_y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("kernel CCA produced non-finite coefficients".into()));
    }
    Ok(KernelModel {
        x_train: x.clone(),
        y_train: y.clone(),
        coef_x,
        coef_y,
        kernel: cfg.kernel,
        kappa: cfg.kappa,
        correlations,
        center_x,
        center_y,
    })
}

pub const MODEL_KIND: &str = "kernel-cca";

impl KernelModel {
    pub fn r(&self) -> usize {
        self.correlations.len()
    }

    pub fn project(&self, features: &DMatrix<f64>, side: Side) -> Result<DMatrix<f64>> {
        let (train, coef, centering) = match side {
            Side::Audio => (&self.x_train, &self.coef_x, &self.center_x),
            Side::Visual => (&self.y_train, &self.coef_y, &self.center_y),
        };
        if features.ncols() != train.ncols() {
            return Err(Error::Argument(format!(
                "{side:?} features have width {}, model expects {}",
                features.ncols(),
                train.ncols()
            )));
        }
        let k = self.kernel.gram(features, train);
        Ok(centering.apply(&k) * coef)
    }

    pub fn container(&self) -> Container {
        let mut c = Container::new(
            MODEL_KIND,
            serde_json::json!({
                "kernel": self.kernel,
                "kappa": self.kappa,
                "r": self.r(),
                "n": self.x_train.nrows(),
                "correlations": self.correlations.as_slice(),
            }),
        );
        c.push("x_train", &self.x_train);
        c.push("y_train", &self.y_train);
        c.push("coef_x", &self.coef_x);
        c.push("coef_y", &self.coef_y);
        c.push_vector("correlations", &self.correlations);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind(MODEL_KIND)?;
        let kernel: Kernel = serde_json::from_value(c.meta["kernel"].clone())?;
        let kappa = c.meta["kappa"]
            .as_f64()
            .ok_or_else(|| Error::Format("kernel model lacks kappa".into()))?;
        let x_train = c.matrix("x_train")?;
        let y_train = c.matrix("y_train")?;
        Ok(Self {
            center_x: GramCentering::of(&kernel.gram(&x_train, &x_train)),
            center_y: GramCentering::of(&kernel.gram(&y_train, &y_train)),
            x_train,
            y_train,
            coef_x: c.matrix("coef_x")?,
            coef_y: c.matrix("coef_y")?,
            kernel,
            kappa,
            correlations: c.vector("correlations")?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.container().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}
