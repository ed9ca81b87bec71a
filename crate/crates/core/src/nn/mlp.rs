use std::sync::Arc;

use rand::Rng;

use super::matrix::Matrix;
use super::tape::{Gradients, NodeId, Tape};
use crate::error::{invalid, Error, Result};

/// Feedforward network with tanh hidden layers and an identity output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Matrix>,
}

/// Number of scalars in a network with `layers` affine maps of hidden width `m`.
pub fn parameter_count(d0: usize, m: usize, layers: usize, d1: usize) -> usize {
    (d0 + 1) * m + (layers - 2) * m * (1 + m) + (m + 1) * d1
}

impl MlpParams {
    fn shape_check(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 3 {
            return Err(invalid("a network needs at least one hidden layer"));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(invalid("layer widths must be positive"));
        }
        let m = layer_sizes[1];
        if layer_sizes[1..layer_sizes.len() - 1].iter().any(|&s| s != m) {
            return Err(invalid("hidden widths must be equal"));
        }
        Ok(())
    }

    /// All weights and biases zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::shape_check(layer_sizes)?;
        let weights = layer_sizes.windows(2).map(|w| Matrix::zeros(w[0], w[1])).collect();
        let biases = layer_sizes.windows(2).map(|w| Matrix::zeros(1, w[1])).collect();
        let net = Self { layer_sizes: layer_sizes.to_vec(), weights, biases };
        net.assert_count();
        Ok(net)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        for w in &mut net.weights {
            let bound = (6.0 / (w.rows() + w.cols()) as f64).sqrt();
            for v in w.as_mut_slice() {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// `[d0, m, ..., m, d1]` with `layers` affine maps.
    pub fn sizes(d0: usize, m: usize, layers: usize, d1: usize) -> Vec<usize> {
        let mut s = vec![d0];
        s.extend(std::iter::repeat_n(m, layers.saturating_sub(1)));
        s.push(d1);
        s
    }

    fn assert_count(&self) {
        let l = self.layer_sizes.len() - 1;
        let expected = parameter_count(self.input_dim(), self.layer_sizes[1], l, self.output_dim());
        assert_eq!(self.param_count(), expected, "parameter count invariant");
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Matrix] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Matrix] {
        &mut self.biases
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Matrix::len).sum()
    }

    /// Parameters in layer order, weights before biases within a layer.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension { expected: self.param_count(), got: flat.len() });
        }
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.as_mut_slice().iter_mut().chain(b.as_mut_slice()) {
                *v = flat[k];
                k += 1;
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), got: x.len() });
        }
        Ok(self.forward_batch(&Matrix::from_vec(1, x.len(), x.to_vec()))?.into_vec())
    }

    /// Row-wise evaluation without recording.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), got: x.cols() });
        }
        let mut tape = Tape::new();
        let nodes = self.register(&mut tape);
        let input = tape.leaf(x.clone());
        let out = nodes.apply(&mut tape, input);
        Ok(tape.value(out).clone())
    }

    /// Records the parameters as leaves.
    pub fn register(&self, tape: &mut Tape) -> MlpNodes {
        let weights = self.weights.iter().map(|w| tape.leaf(w.clone())).collect();
        let biases = self.biases.iter().map(|b| tape.leaf(b.clone())).collect();
        MlpNodes { weights, biases, layer_sizes: Arc::new(self.layer_sizes.clone()) }
    }
}

/// A network whose parameters live on a tape.
#[derive(Debug, Clone)]
pub struct MlpNodes {
    weights: Vec<NodeId>,
    biases: Vec<NodeId>,
    layer_sizes: Arc<Vec<usize>>,
}

impl MlpNodes {
    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn apply(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        let last = self.weights.len() - 1;
        let mut h = x;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = if l < last { tape.affine_tanh(h, *w, *b) } else { tape.affine(h, *w, *b) };
        }
        h
    }

    /// Collects parameter gradients in the layout of [`MlpParams`].
    pub fn gradients(&self, grads: &Gradients) -> MlpParams {
        MlpParams {
            layer_sizes: self.layer_sizes.as_ref().clone(),
            weights: self.weights.iter().map(|&w| grads.wrt(w)).collect(),
            biases: self.biases.iter().map(|&b| grads.wrt(b)).collect(),
        }
    }
}

/// Evaluates `params` at one input vector.
pub fn mlp_forward(params: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    params.forward(x)
}
