//! Run configuration: a JSON file whose keys flags may override.

use std::path::{Path, PathBuf};

use avembed_core::attention::QueryMode;
use avembed_core::data::SynthConfig;
use avembed_core::pipeline::{Method, MethodConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub assignments: Option<PathBuf>,
    pub seeds: Option<PathBuf>,
    pub attention: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Root of every random stream in the run.
    pub seed: u64,
    #[serde(flatten)]
    pub model: MethodConfig,
    /// Methods compared by `eval`; empty means just `method`.
    pub methods: Vec<Method>,
    /// Macro-chunk count; absent together with `k` selects the mean query.
    pub c: Option<usize>,
    pub k: Option<usize>,
    /// Query modes swept by `eval`; empty means the standard four.
    pub modes: Vec<QueryMode>,
    pub folds: usize,
    pub stride: usize,
    pub ap_depth: Option<usize>,
    pub attention_hidden: usize,
    pub attention_dim: usize,
    pub exemplars: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub synth: SynthConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: MethodConfig::default(),
            methods: Vec::new(),
            c: None,
            k: None,
            modes: Vec::new(),
            folds: 5,
            stride: 1,
            ap_depth: None,
            attention_hidden: 16,
            attention_dim: 16,
            exemplars: 3,
            kmeans_max_iter: 100,
            kmeans_tol: 0.0,
            synth: SynthConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn query_mode(&self) -> Result<QueryMode, CliError> {
        let mode = match (self.c, self.k) {
            (None, None) => QueryMode::Mean,
            (Some(c), Some(k)) => QueryMode::TopK { c, k },
            (Some(c), None) => QueryMode::TopK { c, k: 1 },
            (None, Some(_)) => return Err(CliError::Usage("--k needs --c".into())),
        };
        mode.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(mode)
    }

    pub fn eval_modes(&self) -> Vec<QueryMode> {
        if self.modes.is_empty() {
            QueryMode::standard_grid().to_vec()
        } else {
            self.modes.clone()
        }
    }

    pub fn eval_methods(&self) -> Vec<Method> {
        if self.methods.is_empty() {
            vec![self.model.method]
        } else {
            self.methods.clone()
        }
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }

    pub fn require(&self, path: &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
        path.clone().ok_or_else(|| CliError::Usage(format!("missing --{flag}")))
    }
}
