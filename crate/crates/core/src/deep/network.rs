//! Fully connected branch network: tanh hidden layers, logistic output.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derived_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `[in × out]`; a row batch maps as `A·W + b`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    fn affine(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = a * &self.weights;
        for mut row in z.row_iter_mut() {
            row += self.bias.transpose();
        }
        z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Mode {
    /// Inverted dropout on hidden outputs, masks drawn from `seed`.
    Train { seed: u64 },
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchNetwork {
    pub layers: Vec<Layer>,
    pub dropout: f64,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (after dropout of the previous layer).
    inputs: Vec<DMatrix<f64>>,
    /// Activation of each layer before dropout.
    activations: Vec<DMatrix<f64>>,
    /// Dropout multipliers (0 or 1/(1−p)) for hidden layers in train mode.
    masks: Vec<Option<DMatrix<f64>>>,
}

/// Parameter gradients, one `(dW, db)` per layer.
pub type LayerGrads = Vec<(DMatrix<f64>, DVector<f64>)>;

pub(crate) fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl BranchNetwork {
    /// Xavier-uniform weights and zero biases; `dims` runs input to output.
    pub fn new(dims: &[usize], dropout: f64, rng: &mut impl Rng) -> Result<Self> {
        Self::check_dims(dims, dropout)?;
        let layers = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(w[0], w[1], |_, _| rng.random_range(-limit..limit)),
                    bias: DVector::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self { layers, dropout })
    }

    pub fn zeros(dims: &[usize], dropout: f64) -> Result<Self> {
        Self::check_dims(dims, dropout)?;
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weights: DMatrix::zeros(w[0], w[1]),
                bias: DVector::zeros(w[1]),
            })
            .collect();
        Ok(Self { layers, dropout })
    }

    pub fn from_layers(layers: Vec<Layer>, dropout: f64) -> Result<Self> {
        let net = Self { layers, dropout };
        net.validate()?;
        Ok(net)
    }

    fn check_dims(dims: &[usize], dropout: f64) -> Result<()> {
        if dims.len() < 2 {
            return Err(Error::Argument("a branch needs an input and at least one layer".into()));
        }
        if dims.contains(&0) {
            return Err(Error::Argument(format!("layer widths must be positive: {dims:?}")));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Argument(format!("dropout rate {dropout} is outside [0, 1)")));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        Self::check_dims(&self.layer_dims(), self.dropout)?;
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Validation(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::Validation(format!("layer {i} bias has the wrong length")));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(())
    }

    /// Input width followed by every layer's output width.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        if let Some(first) = self.layers.first() {
            dims.push(first.input_dim());
        }
        dims.extend(self.layers.iter().map(Layer::output_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Layer::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_dim)
    }

    pub fn forward(&self, batch: &DMatrix<f64>, mode: Mode) -> Result<(DMatrix<f64>, ForwardCache)> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::Argument(format!(
                "batch width {} does not match branch input {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut rng = match mode {
            Mode::Train { seed } if self.dropout > 0.0 => Some(derived_rng(seed, &[])),
            _ => None,
        };
        let keep = 1.0 - self.dropout;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            activations: Vec::with_capacity(self.layers.len()),
            masks: Vec::with_capacity(self.layers.len()),
        };
        let mut a = batch.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut h = layer.affine(&a);
            if i == last {
                h.apply(|v| *v = logistic(*v));
            } else {
                h.apply(|v| *v = v.tanh());
            }
            let mask = match rng.as_mut() {
                Some(rng) if i < last => Some(DMatrix::from_fn(h.nrows(), h.ncols(), |_, _| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })),
                _ => None,
            };
            let out = match &mask {
                Some(m) => h.component_mul(m),
                None => h.clone(),
            };
            cache.inputs.push(std::mem::replace(&mut a, out));
            cache.activations.push(h);
            cache.masks.push(mask);
        }
        Ok((a, cache))
    }

    pub fn forward_eval(&self, batch: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward(batch, Mode::Eval)?.0)
    }

    /// Backpropagates `d_out = ∂objective/∂output` to parameter gradients.
    pub fn backward(&self, cache: &ForwardCache, d_out: &DMatrix<f64>) -> LayerGrads {
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut d_a = d_out.clone();
        for i in (0..self.layers.len()).rev() {
            if let Some(m) = &cache.masks[i] {
                d_a.component_mul_assign(m);
            }
            let h = &cache.activations[i];
            let d_z = if i == last {
                d_a.zip_map(h, |g, s| g * s * (1.0 - s))
            } else {
                d_a.zip_map(h, |g, t| g * (1.0 - t * t))
            };
            let d_w = cache.inputs[i].transpose() * &d_z;
            let d_b = DVector::from_iterator(d_z.ncols(), d_z.column_iter().map(|c| c.sum()));
            if i > 0 {
                d_a = &d_z * self.layers[i].weights.transpose();
            }
            grads.push((d_w, d_b));
        }
        grads.reverse();
        grads
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }
}

/// Random generator used for weight initialization of a branch.
pub(crate) fn init_rng(seed: u64, branch: u64) -> ChaCha8Rng {
    derived_rng(seed, &[0x1417, branch])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn net(dims: &[usize], dropout: f64, seed: u64) -> BranchNetwork {
        BranchNetwork::new(dims, dropout, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn batch(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_network_outputs_half() {
        let n = BranchNetwork::zeros(&[4, 3, 2], 0.0).unwrap();
        let out = n.forward_eval(&batch(5, 4, 1)).unwrap();
        assert!(out.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn no_dropout_train_equals_eval() {
        let n = net(&[4, 6, 3], 0.0, 2);
        let b = batch(7, 4, 3);
        let (t, _) = n.forward(&b, Mode::Train { seed: 9 }).unwrap();
        assert_eq!(t, n.forward_eval(&b).unwrap());
    }

    #[test]
    fn matches_scalar_transcription() {
        let n = net(&[3, 5, 4, 2], 0.0, 4);
        let b = batch(6, 3, 5);
        let out = n.forward_eval(&b).unwrap();
        for s in 0..6 {
            let mut a: Vec<f64> = (0..3).map(|j| b[(s, j)]).collect();
            for (li, l) in n.layers.iter().enumerate() {
                let mut next = vec![0.0; l.output_dim()];
                for (o, slot) in next.iter_mut().enumerate() {
                    let mut z = l.bias[o];
                    for (i, ai) in a.iter().enumerate() {
                        z += ai * l.weights[(i, o)];
                    }
                    *slot = if li + 1 == n.layers.len() { 1.0 / (1.0 + (-z).exp()) } else { z.tanh() };
                }
                a = next;
            }
            for o in 0..2 {
                assert!((out[(s, o)] - a[o]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dropout_is_seeded_and_inverted() {
        let n = net(&[3, 400, 2], 0.5, 6);
        let b = batch(4, 3, 7);
        let (a, ca) = n.forward(&b, Mode::Train { seed: 1 }).unwrap();
        let (a2, _) = n.forward(&b, Mode::Train { seed: 1 }).unwrap();
        let (a3, _) = n.forward(&b, Mode::Train { seed: 2 }).unwrap();
        assert_eq!(a, a2);
        assert_ne!(a, a3);
        let m = ca.masks[0].as_ref().unwrap();
        assert!(m.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = m.iter().filter(|&&v| v > 0.0).count() as f64 / m.len() as f64;
        assert!((kept - 0.5).abs() < 0.05);
        assert!(ca.masks[1].is_none());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut n = net(&[3, 4, 2], 0.3, 8);
        let b = batch(5, 3, 9);
        let weights = batch(5, 2, 10);
        let mode = Mode::Train { seed: 4 };
        let objective = |n: &BranchNetwork| {
            let (o, _) = n.forward(&b, mode).unwrap();
            o.component_mul(&weights).sum()
        };
        let (_, cache) = n.forward(&b, mode).unwrap();
        let grads = n.backward(&cache, &weights);
        let h = 1e-6;
        for li in 0..2 {
            for idx in 0..n.layers[li].weights.len() {
                let orig = n.layers[li].weights[idx];
                n.layers[li].weights[idx] = orig + h;
                let up = objective(&n);
                n.layers[li].weights[idx] = orig - h;
                let down = objective(&n);
                n.layers[li].weights[idx] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!((fd - grads[li].0[idx]).abs() < 1e-7, "layer {li} weight {idx}");
            }
            for idx in 0..n.layers[li].bias.len() {
                let orig = n.layers[li].bias[idx];
                n.layers[li].bias[idx] = orig + h;
                let up = objective(&n);
                n.layers[li].bias[idx] = orig - h;
                let down = objective(&n);
                n.layers[li].bias[idx] = orig;
                assert!(((up - down) / (2.0 * h) - grads[li].1[idx]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(BranchNetwork::zeros(&[3], 0.0).is_err());
        assert!(BranchNetwork::zeros(&[3, 0], 0.0).is_err());
        assert!(BranchNetwork::zeros(&[3, 2], 1.0).is_err());
        let n = BranchNetwork::zeros(&[3, 2], 0.0).unwrap();
        assert!(matches!(n.forward_eval(&DMatrix::zeros(2, 4)), Err(Error::Argument(_))));
    }
}
