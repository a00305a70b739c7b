//! Bidirectional LSTM attention scorer over a sequence of chunk vectors.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{lstm_step, LstmParams};
use crate::data::chunk::column_max;
use crate::data::{partition_chunks, Chunk, FeatureSequence};
use crate::error::{Error, Result};

/// Seconds per base chunk.
pub const BASE_CHUNK_SEC: usize = 3;
/// Base chunks scored per audio (216 s).
pub const BASE_CHUNKS: usize = 72;

const WEIGHTS_FORMAT: &str = "avembed-attention";
const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub forward_lstm: LstmParams,
    pub backward_lstm: LstmParams,
    /// `[attn_dim × hidden]`, applied to forward states.
    pub w_f: DMatrix<f64>,
    /// `[attn_dim × hidden]`, applied to backward states.
    pub w_b: DMatrix<f64>,
    pub w_out: DVector<f64>,
    pub beta: DVector<f64>,
}

impl AttentionParams {
    pub fn random(input_dim: usize, hidden: usize, attn_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let forward_lstm = LstmParams::random(input_dim, hidden, &mut rng);
        let backward_lstm = LstmParams::random(input_dim, hidden, &mut rng);
        let s = 1.0 / (hidden.max(1) as f64).sqrt();
        let mut m = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(-s..s));
        let w_f = m(attn_dim, hidden);
        let w_b = m(attn_dim, hidden);
        let w_out = m(attn_dim, 1).column(0).into_owned();
        Self {
            forward_lstm,
            backward_lstm,
            w_f,
            w_b,
            w_out,
            beta: DVector::zeros(attn_dim),
        }
    }

    /// Weights whose score is strictly increasing in coordinate `coord` of each chunk vector.
    ///
    /// Both directions use one hidden unit with the input and output gates saturated
    /// open and the forget gate closed, so `h_t ≈ tanh(tanh(x_t[coord]))`, and the
    /// attention head adds the two directions. The highest-scoring chunk is therefore
    /// the one with the largest `coord` value.
    pub fn planted(input_dim: usize, coord: usize) -> Self {
        let mut lstm = LstmParams::zeros(input_dim, 1);
        lstm.w_xc[(0, coord)] = 1.0;
        lstm.b_i[0] = 30.0;
        lstm.b_f[0] = -30.0;
        lstm.b_o[0] = 30.0;
        Self {
            forward_lstm: lstm.clone(),
            backward_lstm: lstm,
            w_f: DMatrix::from_element(1, 1, 1.0),
            w_b: DMatrix::from_element(1, 1, 1.0),
            w_out: DVector::from_element(1, 1.0),
            beta: DVector::zeros(1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.forward_lstm.input_dim()
    }

    pub fn hidden(&self) -> usize {
        self.forward_lstm.hidden()
    }

    pub fn attn_dim(&self) -> usize {
        self.w_out.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.forward_lstm.validate()?;
        self.backward_lstm.validate()?;
        if self.backward_lstm.input_dim() != self.input_dim() {
            return Err(Error::Argument("forward and backward LSTMs take different inputs".into()));
        }
        let a = self.attn_dim();
        if self.w_f.shape() != (a, self.hidden()) {
            return Err(Error::Argument(format!("w_f has shape {:?}", self.w_f.shape())));
        }
        if self.w_b.shape() != (a, self.backward_lstm.hidden()) {
            return Err(Error::Argument(format!("w_b has shape {:?}", self.w_b.shape())));
        }
        if self.beta.len() != a {
            return Err(Error::Argument(format!("beta has length {}, expected {a}", self.beta.len())));
        }
        let head = [&self.w_f, &self.w_b];
        if head.iter().any(|m| m.iter().any(|v| !v.is_finite()))
            || self.w_out.iter().chain(self.beta.iter()).any(|v| !v.is_finite())
        {
            return Err(Error::Validation("attention head has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut arrays = BTreeMap::new();
        for (prefix, lstm) in [("forward", &self.forward_lstm), ("backward", &self.backward_lstm)] {
            for (name, m) in lstm.named() {
                arrays.insert(format!("{prefix}.{name}"), NamedArray::from_matrix(m));
            }
            for (name, b) in lstm.named_biases() {
                arrays.insert(format!("{prefix}.{name}"), NamedArray::from_vector(b));
            }
        }
        arrays.insert("w_f".into(), NamedArray::from_matrix(&self.w_f));
        arrays.insert("w_b".into(), NamedArray::from_matrix(&self.w_b));
        arrays.insert("w_out".into(), NamedArray::from_vector(&self.w_out));
        arrays.insert("beta".into(), NamedArray::from_vector(&self.beta));
        let file = WeightsFile {
            format: WEIGHTS_FORMAT.into(),
            version: WEIGHTS_VERSION,
            arrays,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightsFile = serde_json::from_str(text)?;
        if file.format != WEIGHTS_FORMAT || file.version != WEIGHTS_VERSION {
            return Err(Error::Format(format!(
                "expected {WEIGHTS_FORMAT} v{WEIGHTS_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        let mut arrays = file.arrays;
        let mut take = |name: &str| {
            arrays
                .remove(name)
                .ok_or_else(|| Error::Format(format!("weights file lacks {name}")))
        };
        let mut lstm = |prefix: &str| -> Result<LstmParams> {
            let mut m = |n: &str| take(&format!("{prefix}.{n}"))?.matrix(n);
            let (w_xi, w_hi, w_ci) = (m("w_xi")?, m("w_hi")?, m("w_ci")?);
            let (w_xf, w_hf, w_cf) = (m("w_xf")?, m("w_hf")?, m("w_cf")?);
            let (w_xc, w_hc) = (m("w_xc")?, m("w_hc")?);
            let (w_xo, w_ho, w_co) = (m("w_xo")?, m("w_ho")?, m("w_co")?);
            let mut v = |n: &str| take(&format!("{prefix}.{n}"))?.vector(n);
            Ok(LstmParams {
                w_xi,
                w_hi,
                w_ci,
                b_i: v("b_i")?,
                w_xf,
                w_hf,
                w_cf,
                b_f: v("b_f")?,
                w_xc,
                w_hc,
                b_c: v("b_c")?,
                w_xo,
                w_ho,
                w_co,
                b_o: v("b_o")?,
            })
        };
        let forward_lstm = lstm("forward")?;
        let backward_lstm = lstm("backward")?;
        let params = Self {
            forward_lstm,
            backward_lstm,
            w_f: take("w_f")?.matrix("w_f")?,
            w_b: take("w_b")?.matrix("w_b")?,
            w_out: take("w_out")?.vector("w_out")?,
            beta: take("beta")?.vector("beta")?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightsFile {
    format: String,
    version: u32,
    arrays: BTreeMap<String, NamedArray>,
}

/// A row-major array with an explicit shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct NamedArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl NamedArray {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            shape: vec![m.nrows(), m.ncols()],
            data: m.transpose().as_slice().to_vec(),
        }
    }

    fn from_vector(v: &DVector<f64>) -> Self {
        Self {
            shape: vec![v.len()],
            data: v.as_slice().to_vec(),
        }
    }

    fn matrix(self, name: &str) -> Result<DMatrix<f64>> {
        match self.shape.as_slice() {
            &[r, c] if r * c == self.data.len() => Ok(DMatrix::from_row_slice(r, c, &self.data)),
            _ => Err(Error::Format(format!(
                "{name}: shape {:?} does not hold {} values as a matrix",
                self.shape,
                self.data.len()
            ))),
        }
    }

    fn vector(self, name: &str) -> Result<DVector<f64>> {
        match self.shape.as_slice() {
            &[n] if n == self.data.len() => Ok(DVector::from_vec(self.data)),
            _ => Err(Error::Format(format!(
                "{name}: shape {:?} does not hold {} values as a vector",
                self.shape,
                self.data.len()
            ))),
        }
    }
}

/// Forward and backward hidden states for each time step, in time order.
pub fn bilstm_forward(
    inputs: &[DVector<f64>],
    p: &AttentionParams,
) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    if inputs.is_empty() {
        return Err(Error::Validation("bilstm needs at least one input".into()));
    }
    let run = |lstm: &LstmParams, order: &mut dyn Iterator<Item = &DVector<f64>>| -> Result<Vec<DVector<f64>>> {
        let mut h = DVector::zeros(lstm.hidden());
        let mut c = DVector::zeros(lstm.hidden());
        let mut out = Vec::with_capacity(inputs.len());
        for x in order {
            let (h2, c2) = lstm_step(x, &h, &c, lstm)?;
            out.push(h2.clone());
            h = h2;
            c = c2;
        }
        Ok(out)
    };
    let forward = run(&p.forward_lstm, &mut inputs.iter())?;
    let mut backward = run(&p.backward_lstm, &mut inputs.iter().rev())?;
    backward.reverse();
    Ok(forward.into_iter().zip(backward).collect())
}

/// Elementwise max over the frames of a chunk.
pub fn chunk_feature(chunk: &Chunk) -> Result<DVector<f64>> {
    column_max(chunk.frames(), chunk.dim())
        .ok_or_else(|| Error::Validation(format!("chunk {} is empty", chunk.index)))
}

/// `u_t = w_out · tanh(W_f h_tf + W_b h_tb + β)` for every step.
pub fn attention_scores(
    states: &[(DVector<f64>, DVector<f64>)],
    p: &AttentionParams,
) -> Result<DVector<f64>> {
    if states.is_empty() {
        return Err(Error::Validation("no states to score".into()));
    }
    let mut u = DVector::zeros(states.len());
    for (t, (hf, hb)) in states.iter().enumerate() {
        if hf.len() != p.w_f.ncols() || hb.len() != p.w_b.ncols() {
            return Err(Error::Argument(format!(
                "state widths {}/{} do not match attention weights {}/{}",
                hf.len(),
                hb.len(),
                p.w_f.ncols(),
                p.w_b.ncols()
            )));
        }
        let pre = &p.w_f * hf + &p.w_b * hb + &p.beta;
        u[t] = p.w_out.dot(&pre.map(f64::tanh));
    }
    Ok(u)
}

/// Softmax with max subtraction.
pub fn attention_distribution(u: &DVector<f64>) -> DVector<f64> {
    if u.is_empty() {
        return u.clone();
    }
    let max = u.max();
    let e = u.map(|v| (v - max).exp());
    let total = e.sum();
    e / total
}

/// Attention distribution over the 3-second base chunks of an audio sequence.
///
/// At most [`BASE_CHUNKS`] chunks are scored; trailing frames that do not fill a
/// chunk are ignored.
pub fn score_sequence(seq: &FeatureSequence, p: &AttentionParams) -> Result<DVector<f64>> {
    if seq.dim() != p.input_dim() {
        return Err(Error::Argument(format!(
            "attention weights expect {}-dim frames, sequence has {}",
            p.input_dim(),
            seq.dim()
        )));
    }
    let chunks = partition_chunks(seq, BASE_CHUNK_SEC)?;
    let features = chunks
        .iter()
        .take(BASE_CHUNKS)
        .map(chunk_feature)
        .collect::<Result<Vec<_>>>()?;
    let states = bilstm_forward(&features, p)?;
    Ok(attention_distribution(&attention_scores(&states, p)?))
}
