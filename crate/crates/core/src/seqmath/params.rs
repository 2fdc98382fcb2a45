use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// LSTM gate, in the order the stacked weight blocks are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Candidate = 2,
    Output = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Candidate, Gate::Output];
}

/// Weights of a single LSTM layer.
///
/// The four gates are stacked row-wise: rows `g*H..(g+1)*H` of every array
/// belong to gate `g` (see [`Gate`]).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4H × I` input-to-gate weights.
    pub w_input: Array2<f64>,
    /// `4H × H` recurrent weights.
    pub w_recurrent: Array2<f64>,
    /// `4H` gate biases.
    pub bias: Array1<f64>,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w_input: Array2::zeros((4 * hidden_dim, input_dim)),
            w_recurrent: Array2::zeros((4 * hidden_dim, hidden_dim)),
            bias: Array1::zeros(4 * hidden_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_recurrent.ncols()
    }

    pub fn gate_input_weights(&self, gate: Gate) -> ArrayView2<'_, f64> {
        let h = self.hidden_dim();
        let g = gate as usize;
        self.w_input.slice(s![g * h..(g + 1) * h, ..])
    }

    pub fn gate_recurrent_weights(&self, gate: Gate) -> ArrayView2<'_, f64> {
        let h = self.hidden_dim();
        let g = gate as usize;
        self.w_recurrent.slice(s![g * h..(g + 1) * h, ..])
    }

    pub fn gate_bias(&self, gate: Gate) -> ArrayView1<'_, f64> {
        let h = self.hidden_dim();
        let g = gate as usize;
        self.bias.slice(s![g * h..(g + 1) * h])
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_dim();
        let i = self.input_dim();
        if h == 0 || i == 0 {
            return Err(Error::Shape(format!("dimensions must be positive (input {i}, hidden {h})")));
        }
        if self.w_input.nrows() != 4 * h || self.w_recurrent.nrows() != 4 * h || self.bias.len() != 4 * h
        {
            return Err(Error::Shape(format!(
                "gate blocks inconsistent with hidden_dim {h}: w_input {:?}, w_recurrent {:?}, bias {}",
                self.w_input.dim(),
                self.w_recurrent.dim(),
                self.bias.len()
            )));
        }
        if !all_finite(self.w_input.iter().chain(self.w_recurrent.iter()).chain(self.bias.iter())) {
            return Err(Error::Input("non-finite LSTM weight".into()));
        }
        Ok(())
    }
}

/// Sigmoid output layer mapping the final hidden state to a logit.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weights: Array1<f64>,
    pub bias: f64,
}

impl DenseParams {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self { weights: Array1::zeros(hidden_dim), bias: 0.0 }
    }

    pub fn validate(&self, hidden_dim: usize) -> Result<()> {
        if self.weights.len() != hidden_dim {
            return Err(Error::Shape(format!(
                "dense weights have length {}, hidden_dim is {hidden_dim}",
                self.weights.len()
            )));
        }
        if !all_finite(self.weights.iter().chain(std::iter::once(&self.bias))) {
            return Err(Error::Input("non-finite dense weight".into()));
        }
        Ok(())
    }
}

/// Weight initialisation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    /// Weights are drawn uniformly from `[-scale, scale]`.
    pub scale: f64,
    /// Initial value of every forget-gate bias.
    pub forget_bias: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { scale: 0.08, forget_bias: 1.0 }
    }
}

/// The full learnable parameter set: LSTM layer plus sigmoid head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub lstm: LstmParams,
    pub dense: DenseParams,
}

/// Gradients of a scalar loss with respect to every entry of a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub lstm: LstmParams,
    pub dense: DenseParams,
}

impl Network {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self { lstm: LstmParams::zeros(input_dim, hidden_dim), dense: DenseParams::zeros(hidden_dim) }
    }

    /// Uniform initialisation. Dense and gate biases start at zero except
    /// the forget gate, which starts at `init.forget_bias`.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, init: InitConfig, rng: &mut R) -> Self {
        let mut net = Self::zeros(input_dim, hidden_dim);
        let scale = init.scale;
        let mut draw = |x: &mut f64| *x = if scale > 0.0 { rng.random_range(-scale..=scale) } else { 0.0 };
        net.lstm.w_input.iter_mut().for_each(&mut draw);
        net.lstm.w_recurrent.iter_mut().for_each(&mut draw);
        net.dense.weights.iter_mut().for_each(&mut draw);
        let h = hidden_dim;
        net.lstm.bias.slice_mut(s![h..2 * h]).fill(init.forget_bias);
        net
    }

    pub fn input_dim(&self) -> usize {
        self.lstm.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.lstm.hidden_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.lstm.validate()?;
        self.dense.validate(self.lstm.hidden_dim())
    }

    /// Flat views of every tensor in a fixed order: input weights,
    /// recurrent weights, gate biases, dense weights, dense bias.
    pub fn tensors(&self) -> [&[f64]; 5] {
        tensors(&self.lstm, &self.dense)
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        tensors_mut(&mut self.lstm, &mut self.dense)
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        Self::zeros(net.input_dim(), net.hidden_dim())
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self { lstm: LstmParams::zeros(input_dim, hidden_dim), dense: DenseParams::zeros(hidden_dim) }
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        tensors(&self.lstm, &self.dense)
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        tensors_mut(&mut self.lstm, &mut self.dense)
    }

    pub fn is_congruent(&self, net: &Network) -> bool {
        self.lstm.w_input.dim() == net.lstm.w_input.dim()
            && self.lstm.w_recurrent.dim() == net.lstm.w_recurrent.dim()
            && self.lstm.bias.len() == net.lstm.bias.len()
            && self.dense.weights.len() == net.dense.weights.len()
    }

    /// Adds `other` into `self` entry by entry.
    pub fn accumulate(&mut self, other: &GradientSet) -> Result<()> {
        if self.lstm.w_input.dim() != other.lstm.w_input.dim()
            || self.lstm.w_recurrent.dim() != other.lstm.w_recurrent.dim()
        {
            return Err(Error::Shape("gradient sets differ in shape".into()));
        }
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
        Ok(())
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|g| g * g).sum::<f64>().sqrt()
    }
}

fn tensors<'a>(lstm: &'a LstmParams, dense: &'a DenseParams) -> [&'a [f64]; 5] {
    [
        lstm.w_input.as_slice().expect("standard layout"),
        lstm.w_recurrent.as_slice().expect("standard layout"),
        lstm.bias.as_slice().expect("standard layout"),
        dense.weights.as_slice().expect("standard layout"),
        std::slice::from_ref(&dense.bias),
    ]
}

fn tensors_mut<'a>(lstm: &'a mut LstmParams, dense: &'a mut DenseParams) -> [&'a mut [f64]; 5] {
    [
        lstm.w_input.as_slice_mut().expect("standard layout"),
        lstm.w_recurrent.as_slice_mut().expect("standard layout"),
        lstm.bias.as_slice_mut().expect("standard layout"),
        dense.weights.as_slice_mut().expect("standard layout"),
        std::slice::from_mut(&mut dense.bias),
    ]
}

fn all_finite<'a>(mut it: impl Iterator<Item = &'a f64>) -> bool {
    it.all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_respects_scale_and_forget_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::init(5, 4, InitConfig::default(), &mut rng);
        assert!(net.lstm.w_input.iter().all(|w| w.abs() <= 0.08));
        assert!(net.lstm.gate_bias(Gate::Forget).iter().all(|&b| b == 1.0));
        for gate in [Gate::Input, Gate::Candidate, Gate::Output] {
            assert!(net.lstm.gate_bias(gate).iter().all(|&b| b == 0.0));
        }
        assert_eq!(net.dense.bias, 0.0);
        assert_eq!(net.param_count(), 4 * 4 * 5 + 4 * 4 * 4 + 16 + 4 + 1);
        net.validate().unwrap();
    }

    #[test]
    fn gate_views_cover_distinct_rows() {
        let mut p = LstmParams::zeros(2, 3);
        p.w_input[[3, 1]] = 7.0; // forget gate, unit 0
        assert_eq!(p.gate_input_weights(Gate::Forget)[[0, 1]], 7.0);
        assert_eq!(p.gate_input_weights(Gate::Input).sum(), 0.0);
        assert_eq!(p.gate_recurrent_weights(Gate::Output).dim(), (3, 3));
    }

    #[test]
    fn validate_rejects_bad_shapes_and_nan() {
        let mut net = Network::zeros(2, 3);
        net.dense.weights = Array1::zeros(2);
        assert!(matches!(net.validate(), Err(Error::Shape(_))));
        let mut net = Network::zeros(2, 3);
        net.lstm.bias[0] = f64::NAN;
        assert!(matches!(net.validate(), Err(Error::Input(_))));
    }
}
