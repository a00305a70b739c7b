//! Feature preparation, clustering and method dispatch for whole runs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::attention::{query_representation, score_sequence, select_top_k, AttentionParams, ChunkSelection, QueryMode};
use crate::cca::{
    fit_cca, fit_cca_pairs, fit_kcca_with, KccaConfig, KernelModel, LinearProjection, Ridge, Side, KERNEL_MODEL_KIND,
    LINEAR_MODEL_KIND,
};
use crate::container::Container;
use crate::data::{video_level_visual, Dataset};
use crate::deep::{train_on_pairs, DeepModel, TrainConfig, DEEP_MODEL_KIND};
use crate::error::{Error, Result};
use crate::eval::{Corpus, Embedder, Trainer};
use crate::linalg::stack_rows;
use crate::supervision::{expand_pairs, seeded_kmeans, ClusterModel, SeedsFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cca,
    Kcca,
    Ccca,
    Dcca,
    Sdcca,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Cca, Method::Kcca, Method::Ccca, Method::Dcca, Method::Sdcca];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Cca => "cca",
            Method::Kcca => "kcca",
            Method::Ccca => "ccca",
            Method::Dcca => "dcca",
            Method::Sdcca => "sdcca",
        }
    }

    /// Whether training uses cluster labels.
    pub fn is_supervised(&self) -> bool {
        matches!(self, Method::Ccca | Method::Sdcca)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Argument(format!("unknown method {s:?}; expected one of cca, kcca, ccca, dcca, sdcca")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfig {
    pub method: Method,
    /// Number of shared dimensions for every method.
    pub r: usize,
    /// Ridge of the linear methods.
    pub ridge: Ridge,
    pub kernel: KccaConfig,
    /// Expansion fraction of the supervised methods.
    pub f: f64,
    /// Total training pairs for the supervised methods, overriding `f`.
    pub target_pairs: Option<usize>,
    pub train: TrainConfig,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            method: Method::Cca,
            r: 30,
            ridge: Ridge::default(),
            kernel: KccaConfig::default(),
            f: 1.0,
            target_pairs: None,
            train: TrainConfig::default(),
        }
    }
}

impl MethodConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::Argument("r must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.f) {
            return Err(Error::Argument(format!("expansion fraction {} is outside [0, 1]", self.f)));
        }
        match self.method {
            Method::Dcca | Method::Sdcca => self.deep_config(0).validate(),
            Method::Kcca if !(self.kernel.kappa > 0.0) => Err(Error::Argument("kcca needs kappa > 0".into())),
            _ => Ok(()),
        }
    }

    fn deep_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            r: self.r,
            seed,
            ..self.train.clone()
        }
    }

    fn pairs(&self, labels: &[usize], seed: u64) -> Result<Vec<(usize, usize)>> {
        Ok(expand_pairs(labels, labels, self.f, seed, self.target_pairs)?.index_pairs())
    }
}

/// Any fitted model of the five methods.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Linear(LinearProjection),
    Kernel(KernelModel),
    Deep(DeepModel),
}

/// Fits `cfg.method` on the corpus; `seed` drives pair sampling and training.
pub fn train_method(cfg: &MethodConfig, corpus: &Corpus, seed: u64) -> Result<TrainedModel> {
    cfg.validate()?;
    let (x, y) = (&corpus.audio, &corpus.visual);
    Ok(match cfg.method {
        Method::Cca => TrainedModel::Linear(fit_cca(x, y, cfg.r, cfg.ridge)?),
        Method::Ccca => TrainedModel::Linear(fit_cca_pairs(x, y, &cfg.pairs(&corpus.labels, seed)?, cfg.r, cfg.ridge)?),
        Method::Kcca => TrainedModel::Kernel(fit_kcca_with(x, y, cfg.r, &cfg.kernel)?),
        Method::Dcca => {
            let pairs: Vec<(usize, usize)> = (0..corpus.len()).map(|i| (i, i)).collect();
            TrainedModel::Deep(train_on_pairs(x, y, &pairs, &cfg.deep_config(seed))?)
        }
        Method::Sdcca => TrainedModel::Deep(train_on_pairs(x, y, &cfg.pairs(&corpus.labels, seed)?, &cfg.deep_config(seed))?),
    })
}

impl Trainer for MethodConfig {
    fn fit(&self, train: &Corpus, seed: u64) -> Result<Box<dyn Embedder>> {
        Ok(match train_method(self, train, seed)? {
            TrainedModel::Linear(m) => Box::new(m),
            TrainedModel::Kernel(m) => Box::new(m),
            TrainedModel::Deep(m) => Box::new(m),
        })
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

impl Embedder for TrainedModel {
    fn embed(&self, features: &DMatrix<f64>, side: Side) -> Result<DMatrix<f64>> {
        match self {
            TrainedModel::Linear(m) => m.project(features, side),
            TrainedModel::Kernel(m) => m.project(features, side),
            TrainedModel::Deep(m) => m.embed(features, side),
        }
    }
}

impl TrainedModel {
    pub fn correlations(&self) -> &DVector<f64> {
        match self {
            TrainedModel::Linear(m) => &m.correlations,
            TrainedModel::Kernel(m) => &m.correlations,
            TrainedModel::Deep(m) => &m.cca_head.correlations,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::Linear(_) => LINEAR_MODEL_KIND,
            TrainedModel::Kernel(_) => KERNEL_MODEL_KIND,
            TrainedModel::Deep(_) => DEEP_MODEL_KIND,
        }
    }

    /// Writes the model with `echo` stored under the header key `run`.
    pub fn save(&self, path: impl AsRef<Path>, echo: &serde_json::Value) -> Result<()> {
        let mut c = match self {
            TrainedModel::Linear(m) => m.container(),
            TrainedModel::Kernel(m) => m.container(),
            TrainedModel::Deep(m) => m.to_container(),
        };
        if let Some(meta) = c.meta.as_object_mut() {
            meta.insert("run".into(), echo.clone());
        }
        c.write(path)
    }

    /// Reads a model and the run settings stored with it.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, serde_json::Value)> {
        let c = Container::read(path)?;
        let echo = c.meta.get("run").cloned().unwrap_or(serde_json::Value::Null);
        let model = match c.kind.as_str() {
            LINEAR_MODEL_KIND => TrainedModel::Linear(LinearProjection::from_model_container(&c)?),
            KERNEL_MODEL_KIND => TrainedModel::Kernel(KernelModel::from_container(&c)?),
            DEEP_MODEL_KIND => TrainedModel::Deep(DeepModel::from_container(&c)?),
            other => return Err(Error::Format(format!("unknown model kind {other:?}"))),
        };
        Ok((model, echo))
    }
}

/// Chunk selection of one audio, or `None` for the mean mode.
pub fn select_chunks(dataset: &Dataset, mode: QueryMode, attention: &AttentionParams) -> Result<Vec<Option<ChunkSelection>>> {
    mode.validate()?;
    dataset
        .videos()
        .iter()
        .map(|v| match mode {
            QueryMode::Mean => Ok(None),
            QueryMode::TopK { c, k } => {
                let theta = score_sequence(&v.audio, attention)?;
                Ok(Some(select_top_k(&theta, c, k)?))
            }
        })
        .collect()
}

/// Query vectors of every audio under `mode`, one row per video.
pub fn audio_features(dataset: &Dataset, mode: QueryMode, attention: &AttentionParams) -> Result<DMatrix<f64>> {
    let selections = select_chunks(dataset, mode, attention)?;
    let rows = dataset
        .videos()
        .iter()
        .zip(&selections)
        .map(|(v, s)| query_representation(&v.audio, s.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    stack_rows(&rows)
}

/// Max-pooled video-level visual vectors, one row per video.
pub fn visual_features(dataset: &Dataset) -> Result<DMatrix<f64>> {
    let rows = dataset
        .videos()
        .iter()
        .map(|v| video_level_visual(&v.visual))
        .collect::<Result<Vec<_>>>()?;
    stack_rows(&rows)
}

/// Row indices of each category's exemplar ids, in category order.
pub fn seed_rows(ids: &[String], seeds: &SeedsFile) -> Result<Vec<Vec<usize>>> {
    seeds
        .ordered()?
        .into_iter()
        .map(|(name, members)| {
            members
                .iter()
                .map(|id| {
                    ids.iter()
                        .position(|x| x == id)
                        .ok_or_else(|| Error::Validation(format!("seed {id} of category {name} is not in the dataset")))
                })
                .collect()
        })
        .collect()
}

/// Seeded k-means over the rows of `features`, started from the seed rows.
pub fn cluster_rows(features: &DMatrix<f64>, seeds: &[Vec<usize>], max_iter: usize, tol: f64) -> Result<ClusterModel> {
    let sets: Vec<Vec<DVector<f64>>> = seeds
        .iter()
        .map(|rows| {
            rows.iter()
                .map(|&i| {
                    if i >= features.nrows() {
                        return Err(Error::Argument(format!("seed row {i} is out of range")));
                    }
                    Ok(features.row(i).transpose())
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    seeded_kmeans(features, &sets, max_iter, tol)
}
