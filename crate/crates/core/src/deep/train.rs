//! Minibatch training of the two-branch model and the final CCA head.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{init_rng, BranchNetwork, Layer, Mode};
use super::objective::objective_and_gradient;
use super::optim::RmsProp;
use crate::cca::{fit_cca_pairs, LinearProjection, Ridge, Side};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::linalg::select_rows;
use crate::seed::{derive_seed, derived_rng};
use crate::supervision::expand_pairs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub dropout: f64,
    /// Number of canonical components kept by the objective and the head.
    pub r: usize,
    /// Absolute ridge on each view's batch covariance.
    pub reg: f64,
    /// Ridge of the final CCA head as a fraction of each view's mean variance.
    pub head_reg: f64,
    pub seed: u64,
    pub folds: usize,
    /// Layer widths after the audio input, ending with the branch output.
    pub audio_layers: Vec<usize>,
    /// Layer widths after the visual input, ending with the branch output.
    pub visual_layers: Vec<usize>,
    /// Z-score inputs with statistics of the training rows.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            epochs: 50,
            learning_rate: 0.001,
            rho: 0.9,
            epsilon: 1e-8,
            dropout: 0.2,
            r: 30,
            reg: 1e-4,
            head_reg: 1e-8,
            seed: 0,
            folds: 5,
            audio_layers: vec![128, 128, 64, 64],
            visual_layers: vec![512, 512, 256, 256],
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Argument(msg));
        if self.r == 0 {
            return bad("r must be positive".into());
        }
        if self.batch_size < self.r + 1 {
            return bad(format!("batch size {} must be at least r + 1 = {}", self.batch_size, self.r + 1));
        }
        if self.epochs == 0 || self.folds == 0 {
            return bad("epochs and folds must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) || !(self.reg > 0.0) {
            return bad("learning rate, epsilon and reg must be positive".into());
        }
        if !(self.head_reg >= 0.0) {
            return bad(format!("head ridge {} must be non-negative", self.head_reg));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho {} is outside [0, 1)", self.rho));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} is outside [0, 1)", self.dropout));
        }
        for (name, layers) in [("audio", &self.audio_layers), ("visual", &self.visual_layers)] {
            match layers.last() {
                None => return bad(format!("{name} branch has no layers")),
                Some(&w) if w < self.r => {
                    return bad(format!("{name} branch output {w} is narrower than r = {}", self.r))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Per-column affine map applied to raw features before a branch.
#[derive(Debug, Clone, PartialEq)]
pub struct InputScaler {
    pub mean: DVector<f64>,
    pub scale: DVector<f64>,
}

impl InputScaler {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            scale: DVector::from_element(dim, 1.0),
        }
    }

    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
        let scale = DVector::from_iterator(
            x.ncols(),
            x.column_iter().zip(mean.iter()).map(|(c, m)| {
                let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0);
                if var.sqrt() > 1e-12 {
                    1.0 / var.sqrt()
                } else {
                    1.0
                }
            }),
        );
        Self { mean, scale }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.mean[j]);
            col *= self.scale[j];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepModel {
    pub audio_scaler: InputScaler,
    pub visual_scaler: InputScaler,
    pub audio_branch: BranchNetwork,
    pub visual_branch: BranchNetwork,
    pub cca_head: LinearProjection,
    pub config: TrainConfig,
    /// Mean batch objective of each epoch.
    pub objective_history: Vec<f64>,
    /// Number of training pairs seen per epoch.
    pub n_pairs: usize,
}

/// Trains on row-aligned views.
pub fn train_dcca(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &TrainConfig) -> Result<DeepModel> {
    if x.nrows() != y.nrows() {
        return Err(Error::Argument(format!("views have {} and {} rows", x.nrows(), y.nrows())));
    }
    let pairs: Vec<(usize, usize)> = (0..x.nrows()).map(|i| (i, i)).collect();
    train_on_pairs(x, y, &pairs, cfg)
}

/// Trains on the identity pairing expanded with same-cluster cross pairs.
pub fn train_sdcca(x: &DMatrix<f64>, y: &DMatrix<f64>, labels: &[usize], f: f64, cfg: &TrainConfig) -> Result<DeepModel> {
    if labels.len() != x.nrows() || labels.len() != y.nrows() {
        return Err(Error::Validation(format!(
            "{} labels for {} audio and {} visual rows",
            labels.len(),
            x.nrows(),
            y.nrows()
        )));
    }
    let pairs = expand_pairs(labels, labels, f, cfg.seed, None)?;
    train_on_pairs(x, y, &pairs.index_pairs(), cfg)
}

const SHUFFLE_TAG: u64 = 0x5348;
const DROPOUT_TAG: u64 = 0x4452;

/// Trains on an explicit list of `(audio row, visual row)` pairs.
pub fn train_on_pairs(x: &DMatrix<f64>, y: &DMatrix<f64>, pairs: &[(usize, usize)], cfg: &TrainConfig) -> Result<DeepModel> {
    cfg.validate()?;
    if pairs.len() < cfg.batch_size {
        return Err(Error::Argument(format!(
            "{} training pairs is fewer than the batch size {}",
            pairs.len(),
            cfg.batch_size
        )));
    }
    if let Some(&(a, v)) = pairs.iter().find(|&&(a, v)| a >= x.nrows() || v >= y.nrows()) {
        return Err(Error::Argument(format!("pair ({a}, {v}) is out of range")));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Validation("training features contain non-finite values".into()));
    }
    let (audio_scaler, visual_scaler) = if cfg.standardize {
        (InputScaler::fit(x), InputScaler::fit(y))
    } else {
        (InputScaler::identity(x.ncols()), InputScaler::identity(y.ncols()))
    };
    let xs = audio_scaler.apply(x);
    let ys = visual_scaler.apply(y);

    let dims = |input: usize, layers: &[usize]| {
        let mut d = vec![input];
        d.extend_from_slice(layers);
        d
    };
    let mut audio = BranchNetwork::new(&dims(x.ncols(), &cfg.audio_layers), cfg.dropout, &mut init_rng(cfg.seed, 0))?;
    let mut visual = BranchNetwork::new(&dims(y.ncols(), &cfg.visual_layers), cfg.dropout, &mut init_rng(cfg.seed, 1))?;
    let mut opt_a = RmsProp::new(&audio, cfg.learning_rate, cfg.rho, cfg.epsilon);
    let mut opt_v = RmsProp::new(&visual, cfg.learning_rate, cfg.rho, cfg.epsilon);

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut derived_rng(cfg.seed, &[SHUFFLE_TAG, epoch as u64]));
        let mut total = 0.0;
        let mut count = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < cfg.r + 1 {
                continue;
            }
            let ai: Vec<usize> = chunk.iter().map(|&k| pairs[k].0).collect();
            let vi: Vec<usize> = chunk.iter().map(|&k| pairs[k].1).collect();
            let bx = select_rows(&xs, &ai);
            let by = select_rows(&ys, &vi);
            let seed = |branch: u64| derive_seed(cfg.seed, &[DROPOUT_TAG, epoch as u64, b as u64, branch]);
            let (fx, cache_x) = audio.forward(&bx, Mode::Train { seed: seed(0) })?;
            let (fy, cache_y) = visual.forward(&by, Mode::Train { seed: seed(1) })?;
            let diverged = |value: f64| Error::Divergence { epoch, batch: b, value };
            let (value, (gx, gy)) = match objective_and_gradient(&fx, &fy, cfg.r, cfg.reg) {
                Ok(v) => v,
                Err(e) if e.is_numerical() => return Err(diverged(f64::NAN)),
                Err(e) => return Err(e),
            };
            if !value.is_finite() || gx.iter().chain(gy.iter()).any(|g| !g.is_finite()) {
                return Err(diverged(value));
            }
            let grads_a = audio.backward(&cache_x, &gx);
            let grads_v = visual.backward(&cache_y, &gy);
            opt_a.ascend(&mut audio, &grads_a);
            opt_v.ascend(&mut visual, &grads_v);
            total += value;
            count += 1;
        }
        history.push(total / count.max(1) as f64);
    }

    let fx = audio.forward_eval(&xs)?;
    let fy = visual.forward_eval(&ys)?;
    let cca_head = fit_cca_pairs(&fx, &fy, pairs, cfg.r, Ridge::Relative(cfg.head_reg))?;
    Ok(DeepModel {
        audio_scaler,
        visual_scaler,
        audio_branch: audio,
        visual_branch: visual,
        cca_head,
        config: cfg.clone(),
        objective_history: history,
        n_pairs: pairs.len(),
    })
}

/// Eval-mode branch output followed by the CCA head for `side`.
pub fn embed(model: &DeepModel, features: &DMatrix<f64>, side: Side) -> Result<DMatrix<f64>> {
    model.embed(features, side)
}

pub const MODEL_KIND: &str = "deep-cca";
const MODEL_VERSION: u64 = 1;

impl DeepModel {
    pub fn r(&self) -> usize {
        self.cca_head.r()
    }

    /// Branch output before the CCA head.
    pub fn branch_output(&self, features: &DMatrix<f64>, side: Side) -> Result<DMatrix<f64>> {
        let (scaler, branch) = match side {
            Side::Audio => (&self.audio_scaler, &self.audio_branch),
            Side::Visual => (&self.visual_scaler, &self.visual_branch),
        };
        if features.ncols() != branch.input_dim() {
            return Err(Error::Argument(format!(
                "{side:?} features have width {}, model expects {}",
                features.ncols(),
                branch.input_dim()
            )));
        }
        branch.forward_eval(&scaler.apply(features))
    }

    pub fn embed(&self, features: &DMatrix<f64>, side: Side) -> Result<DMatrix<f64>> {
        self.cca_head.project(&self.branch_output(features, side)?, side)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(
            MODEL_KIND,
            serde_json::json!({
                "version": MODEL_VERSION,
                "config": self.config,
                "audio_dims": self.audio_branch.layer_dims(),
                "visual_dims": self.visual_branch.layer_dims(),
                "dropout": self.audio_branch.dropout,
                "head": self.cca_head.header(),
                "objective_history": self.objective_history,
                "n_pairs": self.n_pairs,
            }),
        );
        for (name, scaler, branch) in [
            ("audio", &self.audio_scaler, &self.audio_branch),
            ("visual", &self.visual_scaler, &self.visual_branch),
        ] {
            c.push_vector(format!("{name}.input_mean"), &scaler.mean);
            c.push_vector(format!("{name}.input_scale"), &scaler.scale);
            for (i, l) in branch.layers.iter().enumerate() {
                c.push(format!("{name}.layer{i}.w"), &l.weights);
                c.push_vector(format!("{name}.layer{i}.b"), &l.bias);
            }
        }
        self.cca_head.to_container(&mut c, "head.");
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind(MODEL_KIND)?;
        let meta = &c.meta;
        if meta["version"].as_u64() != Some(MODEL_VERSION) {
            return Err(Error::Format(format!("unsupported deep model version {}", meta["version"])));
        }
        let config: TrainConfig = serde_json::from_value(meta["config"].clone())?;
        let dropout = meta["dropout"]
            .as_f64()
            .ok_or_else(|| Error::Format("deep model lacks dropout".into()))?;
        let mut branches = Vec::new();
        for name in ["audio", "visual"] {
            let dims: Vec<usize> = serde_json::from_value(meta[format!("{name}_dims")].clone())?;
            let layers = (0..dims.len().saturating_sub(1))
                .map(|i| {
                    Ok(Layer {
                        weights: c.matrix(&format!("{name}.layer{i}.w"))?,
                        bias: c.vector(&format!("{name}.layer{i}.b"))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let branch = BranchNetwork::from_layers(layers, dropout)?;
            if branch.layer_dims() != dims {
                return Err(Error::Format(format!("{name} branch blocks disagree with the topology")));
            }
            let scaler = InputScaler {
                mean: c.vector(&format!("{name}.input_mean"))?,
                scale: c.vector(&format!("{name}.input_scale"))?,
            };
            if scaler.mean.len() != dims[0] || scaler.scale.len() != dims[0] {
                return Err(Error::Format(format!("{name} input scaler has the wrong width")));
            }
            branches.push((scaler, branch));
        }
        let head_meta = &meta["head"];
        let reg = |k: &str| {
            head_meta[k]
                .as_f64()
                .ok_or_else(|| Error::Format(format!("head header lacks {k}")))
        };
        let cca_head = LinearProjection::from_container(c, "head.", reg("reg_x")?, reg("reg_y")?)?;
        let (visual_scaler, visual_branch) = branches.pop().expect("two branches");
        let (audio_scaler, audio_branch) = branches.pop().expect("two branches");
        if cca_head.dx() != audio_branch.output_dim() || cca_head.dy() != visual_branch.output_dim() {
            return Err(Error::Format("CCA head does not match branch outputs".into()));
        }
        Ok(Self {
            audio_scaler,
            visual_scaler,
            audio_branch,
            visual_branch,
            cca_head,
            config,
            objective_history: serde_json::from_value(meta["objective_history"].clone())?,
            n_pairs: meta["n_pairs"].as_u64().unwrap_or(0) as usize,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.to_container().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_container(&Container::from_bytes(bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}
