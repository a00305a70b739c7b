//! RMSProp for gradient ascent on branch parameters.

use nalgebra::{DMatrix, DVector};

use super::network::{BranchNetwork, LayerGrads};

#[derive(Debug, Clone)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    cache: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl RmsProp {
    pub fn new(net: &BranchNetwork, learning_rate: f64, rho: f64, epsilon: f64) -> Self {
        let cache = net
            .layers
            .iter()
            .map(|l| (DMatrix::zeros(l.input_dim(), l.output_dim()), DVector::zeros(l.output_dim())))
            .collect();
        Self {
            learning_rate,
            rho,
            epsilon,
            cache,
        }
    }

    /// Moves parameters uphill along `grads`.
    pub fn ascend(&mut self, net: &mut BranchNetwork, grads: &LayerGrads) {
        let (lr, rho, eps) = (self.learning_rate, self.rho, self.epsilon);
        for ((layer, (gw, gb)), (cw, cb)) in net.layers.iter_mut().zip(grads).zip(self.cache.iter_mut()) {
            for ((p, &g), c) in layer.weights.iter_mut().zip(gw.iter()).zip(cw.iter_mut()) {
                *c = rho * *c + (1.0 - rho) * g * g;
                *p += lr * g / (c.sqrt() + eps);
            }
            for ((p, &g), c) in layer.bias.iter_mut().zip(gb.iter()).zip(cb.iter_mut()) {
                *c = rho * *c + (1.0 - rho) * g * g;
                *p += lr * g / (c.sqrt() + eps);
            }
        }
    }
}
