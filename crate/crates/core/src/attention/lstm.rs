//! A single LSTM cell with peephole connections.
//!
//! ```text
//! i_t = σ(b_i + W_xi x_t + W_hi h_{t-1} + W_ci c_{t-1})
//! f_t = σ(b_f + W_xf x_t + W_hf h_{t-1} + W_cf c_{t-1})
//! c_t = f_t ⊙ c_{t-1} + i_t ⊙ tanh(W_xc x_t + W_hc h_{t-1} + b_c)
//! o_t = σ(W_xo x_t + W_ho h_{t-1} + W_co c_t + b_o)
//! h_t = o_t ⊙ tanh(c_t)
//! ```
//!
//! The output gate peeks at the *updated* cell state `c_t`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_xi: DMatrix<f64>,
    pub w_hi: DMatrix<f64>,
    pub w_ci: DMatrix<f64>,
    pub b_i: DVector<f64>,
    pub w_xf: DMatrix<f64>,
    pub w_hf: DMatrix<f64>,
    pub w_cf: DMatrix<f64>,
    pub b_f: DVector<f64>,
    pub w_xc: DMatrix<f64>,
    pub w_hc: DMatrix<f64>,
    pub b_c: DVector<f64>,
    pub w_xo: DMatrix<f64>,
    pub w_ho: DMatrix<f64>,
    pub w_co: DMatrix<f64>,
    pub b_o: DVector<f64>,
}

/// Gate activations and new state of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub input_gate: DVector<f64>,
    pub forget_gate: DVector<f64>,
    pub output_gate: DVector<f64>,
    pub h: DVector<f64>,
    pub c: DVector<f64>,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let x = || DMatrix::zeros(hidden, input_dim);
        let h = || DMatrix::zeros(hidden, hidden);
        let b = || DVector::zeros(hidden);
        Self {
            w_xi: x(),
            w_hi: h(),
            w_ci: h(),
            b_i: b(),
            w_xf: x(),
            w_hf: h(),
            w_cf: h(),
            b_f: b(),
            w_xc: x(),
            w_hc: h(),
            b_c: b(),
            w_xo: x(),
            w_ho: h(),
            w_co: h(),
            b_o: b(),
        }
    }

    /// Uniform init in `±1/sqrt(fan_in)`.
    pub fn random<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden);
        let sx = 1.0 / (input_dim.max(1) as f64).sqrt();
        let sh = 1.0 / (hidden.max(1) as f64).sqrt();
        for m in [&mut p.w_xi, &mut p.w_xf, &mut p.w_xc, &mut p.w_xo] {
            m.iter_mut().for_each(|v| *v = rng.random_range(-sx..sx));
        }
        for m in [
            &mut p.w_hi, &mut p.w_ci, &mut p.w_hf, &mut p.w_cf, &mut p.w_hc, &mut p.w_ho, &mut p.w_co,
        ] {
            m.iter_mut().for_each(|v| *v = rng.random_range(-sh..sh));
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_xi.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w_xi.nrows()
    }

    pub(crate) fn named(&self) -> Vec<(&'static str, &DMatrix<f64>)> {
        vec![
            ("w_xi", &self.w_xi),
            ("w_hi", &self.w_hi),
            ("w_ci", &self.w_ci),
            ("w_xf", &self.w_xf),
            ("w_hf", &self.w_hf),
            ("w_cf", &self.w_cf),
            ("w_xc", &self.w_xc),
            ("w_hc", &self.w_hc),
            ("w_xo", &self.w_xo),
            ("w_ho", &self.w_ho),
            ("w_co", &self.w_co),
        ]
    }

    pub(crate) fn named_biases(&self) -> Vec<(&'static str, &DVector<f64>)> {
        vec![("b_i", &self.b_i), ("b_f", &self.b_f), ("b_c", &self.b_c), ("b_o", &self.b_o)]
    }

    /// Checks that every shape agrees with `w_xi` and all entries are finite.
    pub fn validate(&self) -> Result<()> {
        let (h, d) = (self.hidden(), self.input_dim());
        for (name, m) in self.named() {
            let want = if name.starts_with("w_x") { (h, d) } else { (h, h) };
            if m.shape() != want {
                return Err(Error::Argument(format!(
                    "{name} has shape {:?}, expected {want:?}",
                    m.shape()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("{name} has non-finite entries")));
            }
        }
        for (name, b) in self.named_biases() {
            if b.len() != h {
                return Err(Error::Argument(format!("{name} has length {}, expected {h}", b.len())));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }
}

/// One recurrence step returning the full gate trace.
pub fn lstm_step_trace(
    x: &DVector<f64>,
    h_prev: &DVector<f64>,
    c_prev: &DVector<f64>,
    p: &LstmParams,
) -> Result<StepTrace> {
    if x.len() != p.input_dim() || h_prev.len() != p.hidden() || c_prev.len() != p.hidden() {
        return Err(Error::Argument(format!(
            "lstm step expects input {} and state {}, got {}, {}, {}",
            p.input_dim(),
            p.hidden(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let input_gate = (&p.b_i + &p.w_xi * x + &p.w_hi * h_prev + &p.w_ci * c_prev).map(sigmoid);
    let forget_gate = (&p.b_f + &p.w_xf * x + &p.w_hf * h_prev + &p.w_cf * c_prev).map(sigmoid);
    let candidate = (&p.w_xc * x + &p.w_hc * h_prev + &p.b_c).map(f64::tanh);
    let c = forget_gate.component_mul(c_prev) + input_gate.component_mul(&candidate);
    let output_gate = (&p.w_xo * x + &p.w_ho * h_prev + &p.w_co * &c + &p.b_o).map(sigmoid);
    let h = output_gate.component_mul(&c.map(f64::tanh));
    Ok(StepTrace {
        input_gate,
        forget_gate,
        output_gate,
        h,
        c,
    })
}

/// One recurrence step: returns `(h_t, c_t)`.
pub fn lstm_step(
    x: &DVector<f64>,
    h_prev: &DVector<f64>,
    c_prev: &DVector<f64>,
    p: &LstmParams,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let t = lstm_step_trace(x, h_prev, c_prev, p)?;
    Ok((t.h, t.c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Scalar loop transcription of the cell equations.
    fn reference_step(x: &[f64], h: &[f64], c: &[f64], p: &LstmParams) -> (Vec<f64>, Vec<f64>) {
        let n = p.hidden();
        let dot = |m: &DMatrix<f64>, row: usize, v: &[f64]| -> f64 {
            (0..v.len()).map(|j| m[(row, j)] * v[j]).sum()
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut c_new = vec![0.0; n];
        for k in 0..n {
            let i = sig(p.b_i[k] + dot(&p.w_xi, k, x) + dot(&p.w_hi, k, h) + dot(&p.w_ci, k, c));
            let f = sig(p.b_f[k] + dot(&p.w_xf, k, x) + dot(&p.w_hf, k, h) + dot(&p.w_cf, k, c));
            let g = (dot(&p.w_xc, k, x) + dot(&p.w_hc, k, h) + p.b_c[k]).tanh();
            c_new[k] = f * c[k] + i * g;
        }
        let mut h_new = vec![0.0; n];
        for k in 0..n {
            let o = sig(dot(&p.w_xo, k, x) + dot(&p.w_ho, k, h) + dot(&p.w_co, k, &c_new) + p.b_o[k]);
            h_new[k] = o * c_new[k].tanh();
        }
        (h_new, c_new)
    }

    #[test]
    fn zero_params_give_zero_state() {
        let p = LstmParams::zeros(3, 2);
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let (h, c) = lstm_step(&x, &DVector::zeros(2), &DVector::zeros(2), &p).unwrap();
        assert_eq!(h, DVector::zeros(2));
        assert_eq!(c, DVector::zeros(2));
    }

    #[test]
    fn gates_in_open_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = LstmParams::random(4, 3, &mut rng);
        let x = DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
        let h = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let c = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
        let t = lstm_step_trace(&x, &h, &c, &p).unwrap();
        for g in [&t.input_gate, &t.forget_gate, &t.output_gate] {
            assert!(g.iter().all(|&v| v > 0.0 && v < 1.0));
        }
        assert!(t.h.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn matches_scalar_transcription() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = LstmParams::random(4, 4, &mut rng);
        for b in [&mut p.b_i, &mut p.b_f, &mut p.b_c, &mut p.b_o] {
            b.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (h1, c1) = lstm_step(
            &DVector::from_vec(x.clone()),
            &DVector::from_vec(h.clone()),
            &DVector::from_vec(c.clone()),
            &p,
        )
        .unwrap();
        let (h2, c2) = reference_step(&x, &h, &c, &p);
        for k in 0..4 {
            assert!((h1[k] - h2[k]).abs() < 1e-12);
            assert!((c1[k] - c2[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_argument_error() {
        let p = LstmParams::zeros(3, 2);
        let r = lstm_step(&DVector::zeros(4), &DVector::zeros(2), &DVector::zeros(2), &p);
        assert!(matches!(r, Err(Error::Argument(_))));
    }
}
