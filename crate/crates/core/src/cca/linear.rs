//! Closed-form regularized CCA.
//!
//! With centered views, `Σxx = XᵀX/(n−1) + reg·I` (likewise `Σyy`) and
//! `Σxy = XᵀY/(n−1)`. The whitened cross-covariance
//! `T = Σxx^{-1/2} Σxy Σyy^{-1/2} = U S Vᵀ` gives the projections
//! `Wx = Σxx^{-1/2} U_r`, `Wy = Σyy^{-1/2} V_r`, which satisfy
//! `WxᵀΣxxWx = WyᵀΣyyWy = I`, and the canonical correlations `S_r`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::linalg::{add_ridge, center, inv_sqrt_psd, sorted_svd};

/// Ridge added to the diagonal of each view's covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Ridge {
    /// A fixed amount.
    Absolute(f64),
    /// `factor · trace(Σ̂)/d`, resolved separately for each view.
    Relative(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-4)
    }
}

impl From<f64> for Ridge {
    fn from(v: f64) -> Self {
        Ridge::Absolute(v)
    }
}

impl Ridge {
    fn resolve(self, cov: &DMatrix<f64>) -> Result<f64> {
        let reg = match self {
            Ridge::Absolute(v) => v,
            Ridge::Relative(f) => f * cov.trace() / cov.nrows().max(1) as f64,
        };
        if !(reg >= 0.0) || !reg.is_finite() {
            return Err(Error::Argument(format!("ridge must be a finite non-negative value, got {reg}")));
        }
        Ok(reg)
    }
}

/// Which view a feature matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// The audio view (`X`).
    Audio,
    /// The visual view (`Y`).
    Visual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProjection {
    pub wx: DMatrix<f64>,
    pub wy: DMatrix<f64>,
    pub mean_x: DVector<f64>,
    pub mean_y: DVector<f64>,
    pub correlations: DVector<f64>,
    pub reg_x: f64,
    pub reg_y: f64,
}

/// Sample moments of a (possibly expanded) pairing of two views.
#[derive(Debug, Clone)]
pub struct PairMoments {
    pub mean_x: DVector<f64>,
    pub mean_y: DVector<f64>,
    pub sxx: DMatrix<f64>,
    pub syy: DMatrix<f64>,
    pub sxy: DMatrix<f64>,
    pub n_pairs: usize,
}

impl PairMoments {
    /// Moments of the row pairing `(x[a], y[v])` for every `(a, v)` in `pairs`,
    /// identical to materializing the paired rows and using aligned moments.
    pub fn from_pairs(x: &DMatrix<f64>, y: &DMatrix<f64>, pairs: &[(usize, usize)]) -> Result<Self> {
        let p = pairs.len();
        if p < 2 {
            return Err(Error::Argument(format!("need at least 2 pairs, got {p}")));
        }
        if let Some(&(a, v)) = pairs.iter().find(|&&(a, v)| a >= x.nrows() || v >= y.nrows()) {
            return Err(Error::Argument(format!("pair ({a}, {v}) is out of range")));
        }
        let mut wx = vec![0.0; x.nrows()];
        let mut wy = vec![0.0; y.nrows()];
        for &(a, v) in pairs {
            wx[a] += 1.0;
            wy[v] += 1.0;
        }
        let mean_x = weighted_mean(x, &wx, p);
        let mean_y = weighted_mean(y, &wy, p);
        let xc = center(x, &mean_x);
        let yc = center(y, &mean_y);
        let denom = (p - 1) as f64;
        let sxx = xc.transpose() * scale_rows(&xc, &wx) / denom;
        let syy = yc.transpose() * scale_rows(&yc, &wy) / denom;
        // row a accumulates the visual rows it is paired with
        let mut paired = DMatrix::zeros(x.nrows(), y.ncols());
        for &(a, v) in pairs {
            let mut row = paired.row_mut(a);
            row += yc.row(v);
        }
        let sxy = xc.transpose() * paired / denom;
        Ok(Self {
            mean_x,
            mean_y,
            sxx,
            syy,
            sxy,
            n_pairs: p,
        })
    }
}

fn weighted_mean(m: &DMatrix<f64>, w: &[f64], total: usize) -> DVector<f64> {
    let mut acc = DVector::zeros(m.ncols());
    for (i, &wi) in w.iter().enumerate() {
        if wi != 0.0 {
            acc += m.row(i).transpose() * wi;
        }
    }
    acc / total as f64
}

fn scale_rows(m: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= w[i];
    }
    out
}

fn identity_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i, i)).collect()
}

/// Fits CCA on row-aligned views.
pub fn fit_cca(x: &DMatrix<f64>, y: &DMatrix<f64>, r: usize, reg: impl Into<Ridge>) -> Result<LinearProjection> {
    if x.nrows() != y.nrows() {
        return Err(Error::Argument(format!(
            "views have {} and {} rows",
            x.nrows(),
            y.nrows()
        )));
    }
    fit_cca_pairs(x, y, &identity_pairs(x.nrows()), r, reg)
}

/// Fits CCA on the pairing `(x[a], y[v])` given by `pairs`.
pub fn fit_cca_pairs(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    pairs: &[(usize, usize)],
    r: usize,
    reg: impl Into<Ridge>,
) -> Result<LinearProjection> {
    check_inputs(x, y, r)?;
    let moments = PairMoments::from_pairs(x, y, pairs)?;
    fit_from_moments(moments, r, reg.into())
}

fn check_inputs(x: &DMatrix<f64>, y: &DMatrix<f64>, r: usize) -> Result<()> {
    if x.nrows() < 2 || y.nrows() < 2 {
        return Err(Error::Argument("CCA needs at least two samples".into()));
    }
    if r == 0 || r > x.ncols().min(y.ncols()) {
        return Err(Error::Argument(format!(
            "r = {r} must be in 1..={}",
            x.ncols().min(y.ncols())
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Validation("CCA inputs contain non-finite values".into()));
    }
    Ok(())
}

/// Whitening factors and SVD of the whitened cross-covariance.
pub(crate) struct Whitened {
    pub kx: DMatrix<f64>,
    pub ky: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
    pub reg_x: f64,
    pub reg_y: f64,
}

pub(crate) fn whiten(sxx: &DMatrix<f64>, syy: &DMatrix<f64>, sxy: &DMatrix<f64>, ridge: Ridge) -> Result<Whitened> {
    let reg_x = ridge.resolve(sxx)?;
    let reg_y = ridge.resolve(syy)?;
    let mut cxx = sxx.clone();
    let mut cyy = syy.clone();
    add_ridge(&mut cxx, reg_x);
    add_ridge(&mut cyy, reg_y);
    let kx = inv_sqrt_psd(&cxx, true, "audio covariance")?;
    let ky = inv_sqrt_psd(&cyy, true, "visual covariance")?;
    let t = &kx * sxy * &ky;
    let (u, s, v) = sorted_svd(&t)?;
    Ok(Whitened {
        kx,
        ky,
        u,
        s,
        v,
        reg_x,
        reg_y,
    })
}

fn fit_from_moments(m: PairMoments, r: usize, ridge: Ridge) -> Result<LinearProjection> {
    let w = whiten(&m.sxx, &m.syy, &m.sxy, ridge)?;
    let wx = &w.kx * w.u.columns(0, r);
    let wy = &w.ky * w.v.columns(0, r);
    let correlations = DVector::from_iterator(r, w.s.iter().take(r).map(|&s| s.clamp(0.0, 1.0)));
    Ok(LinearProjection {
        wx,
        wy,
        mean_x: m.mean_x,
        mean_y: m.mean_y,
        correlations,
        reg_x: w.reg_x,
        reg_y: w.reg_y,
    })
}

pub const MODEL_KIND: &str = "linear-cca";

impl LinearProjection {
    pub fn r(&self) -> usize {
        self.correlations.len()
    }

    pub fn dx(&self) -> usize {
        self.wx.nrows()
    }

    pub fn dy(&self) -> usize {
        self.wy.nrows()
    }

    /// `(features − mean)·W` for the chosen side.
    pub fn project(&self, features: &DMatrix<f64>, side: Side) -> Result<DMatrix<f64>> {
        let (w, mean) = match side {
            Side::Audio => (&self.wx, &self.mean_x),
            Side::Visual => (&self.wy, &self.mean_y),
        };
        if features.ncols() != w.nrows() {
            return Err(Error::Argument(format!(
                "{side:?} features have width {}, model expects {}",
                features.ncols(),
                w.nrows()
            )));
        }
        Ok(center(features, mean) * w)
    }

    pub(crate) fn to_container(&self, c: &mut Container, prefix: &str) {
        c.push(format!("{prefix}wx"), &self.wx);
        c.push(format!("{prefix}wy"), &self.wy);
        c.push_vector(format!("{prefix}mean_x"), &self.mean_x);
        c.push_vector(format!("{prefix}mean_y"), &self.mean_y);
        c.push_vector(format!("{prefix}correlations"), &self.correlations);
    }

    pub(crate) fn from_container(c: &Container, prefix: &str, reg_x: f64, reg_y: f64) -> Result<Self> {
        let p = Self {
            wx: c.matrix(&format!("{prefix}wx"))?,
            wy: c.matrix(&format!("{prefix}wy"))?,
            mean_x: c.vector(&format!("{prefix}mean_x"))?,
            mean_y: c.vector(&format!("{prefix}mean_y"))?,
            correlations: c.vector(&format!("{prefix}correlations"))?,
            reg_x,
            reg_y,
        };
        let r = p.correlations.len();
        if p.wx.ncols() != r || p.wy.ncols() != r || p.mean_x.len() != p.dx() || p.mean_y.len() != p.dy() {
            return Err(Error::Format("inconsistent CCA block shapes".into()));
        }
        Ok(p)
    }

    pub fn header(&self) -> serde_json::Value {
        serde_json::json!({
            "dx": self.dx(),
            "dy": self.dy(),
            "r": self.r(),
            "reg_x": self.reg_x,
            "reg_y": self.reg_y,
            "correlations": self.correlations.as_slice(),
        })
    }

    /// The model as a standalone container.
    pub fn container(&self) -> Container {
        let mut c = Container::new(MODEL_KIND, self.header());
        self.to_container(&mut c, "");
        c
    }

    pub fn from_model_container(c: &Container) -> Result<Self> {
        c.expect_kind(MODEL_KIND)?;
        let reg = |k: &str| {
            c.meta[k]
                .as_f64()
                .ok_or_else(|| Error::Format(format!("model header lacks {k}")))
        };
        Self::from_container(c, "", reg("reg_x")?, reg("reg_y")?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.container().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_model_container(&Container::from_bytes(bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.container().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_model_container(&Container::read(path)?)
    }
}

/// Free-function form of [`LinearProjection::project`].
pub fn project(model: &LinearProjection, features: &DMatrix<f64>, side: Side) -> Result<DMatrix<f64>> {
    model.project(features, side)
}
