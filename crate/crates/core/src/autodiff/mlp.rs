use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{LinalgError, Matrix};

use super::{AutodiffError, NodeId, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

/// One affine layer, `y = x·Wᵀ + b` with `W` stored as out×in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn zeros_like(&self) -> Layer {
        Layer {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }
}

/// Feed-forward network: affine layers with `hidden_activation` between them
/// and `output_activation` after the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

/// Parameter leaves of a network recorded on a tape.
#[derive(Debug, Clone)]
pub struct ParamNodes {
    pub layers: Vec<(NodeId, NodeId)>,
    hidden_activation: Activation,
    output_activation: Activation,
}

impl MlpParams {
    /// ReLU hidden layers and a linear output, validating that dimensions chain.
    pub fn new(layers: Vec<Layer>) -> Result<Self, AutodiffError> {
        Self::with_activations(layers, Activation::Relu, Activation::Linear)
    }

    pub fn with_activations(
        layers: Vec<Layer>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self, AutodiffError> {
        if layers.is_empty() {
            return Err(AutodiffError::NoLayers);
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(AutodiffError::BiasLength {
                    layer: i,
                    expected: layer.out_dim(),
                    actual: layer.bias.len(),
                });
            }
            if let Some(next) = layers.get(i + 1) {
                if next.in_dim() != layer.out_dim() {
                    return Err(AutodiffError::LayerChain {
                        layer: i + 1,
                        expected: layer.out_dim(),
                        actual: next.in_dim(),
                    });
                }
            }
        }
        Ok(Self {
            layers,
            hidden_activation,
            output_activation,
        })
    }

    /// Default initialization: weights and biases uniform on
    /// `[-1/√fan_in, 1/√fan_in]`. `dims` lists the layer widths including
    /// input and output.
    pub fn init_uniform<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weight = Matrix::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-bound..bound));
                let bias = (0..fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
                Layer { weight, bias }
            })
            .collect();
        Self::new(layers).expect("dims chain by construction")
    }

    /// Weights drawn i.i.d. standard normal, biases zero.
    pub fn init_normal<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weight: Matrix::from_fn(w[1], w[0], |_, _| StandardNormal.sample(rng)),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Self::new(layers).expect("dims chain by construction")
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Widths of every layer boundary, input first.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn zeros_like(&self) -> Vec<Layer> {
        self.layers.iter().map(Layer::zeros_like).collect()
    }

    fn activation_for(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<(), AutodiffError> {
        if x.cols() != self.in_dim() {
            return Err(AutodiffError::InputDim {
                expected: self.in_dim(),
                actual: x.cols(),
            });
        }
        Ok(())
    }

    /// Evaluates the network on a batch (rows are samples).
    pub fn forward(&self, x: &Matrix) -> Result<Matrix, AutodiffError> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Matrix::gemm(&h, false, &layer.weight, true)?;
            let relu = self.activation_for(i) == Activation::Relu;
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += b;
                    if relu && *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            h = z;
        }
        Ok(h)
    }

    /// Records the parameters as tape leaves.
    pub fn leaves(&self, tape: &mut Tape) -> ParamNodes {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let w = tape.leaf(l.weight.clone());
                let b = tape.leaf(Matrix::from_raw(1, l.bias.len(), l.bias.clone()));
                (w, b)
            })
            .collect();
        ParamNodes {
            layers,
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
        }
    }

    /// Applies `scale · grad` to every parameter in place.
    pub fn apply_update(&mut self, update: &[Layer], scale: f64) -> Result<(), LinalgError> {
        assert_eq!(update.len(), self.layers.len(), "update has wrong layer count");
        for (layer, u) in self.layers.iter_mut().zip(update) {
            layer.weight.axpy(scale, &u.weight)?;
            for (b, ub) in layer.bias.iter_mut().zip(&u.bias) {
                *b += scale * ub;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

impl ParamNodes {
    /// Records the network applied to `x` and returns the output node.
    pub fn apply(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId, LinalgError> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = tape.matmul(h, false, w, true)?;
            let z = tape.add_bias(z, b)?;
            let act = if i == last { self.output_activation } else { self.hidden_activation };
            h = match act {
                Activation::Relu => tape.relu(z),
                Activation::Linear => z,
            };
        }
        Ok(h)
    }

    /// Flat list of leaves in (weight, bias) order per layer.
    pub fn flat(&self) -> Vec<NodeId> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    /// Collects gradients (as produced by [`Tape::gradients`] on [`flat`](Self::flat))
    /// into layer shape, filling unreachable parameters with zeros.
    pub fn collect(&self, tape: &Tape, grads: &[Option<NodeId>]) -> Vec<Layer> {
        assert_eq!(grads.len(), self.layers.len() * 2);
        self.layers
            .iter()
            .zip(grads.chunks_exact(2))
            .map(|(&(w, b), g)| {
                let weight = match g[0] {
                    Some(id) => tape.value(id).clone(),
                    None => {
                        let (r, c) = tape.value(w).shape();
                        Matrix::zeros(r, c)
                    }
                };
                let bias = match g[1] {
                    Some(id) => tape.value(id).data().to_vec(),
                    None => vec![0.0; tape.value(b).cols()],
                };
                Layer { weight, bias }
            })
            .collect()
    }
}
