//! Reverse-mode differentiation over a small closed set of matrix ops, and
//! the multilayer perceptrons used for both players of the game.
//!
//! Backward passes record their adjoints as ordinary tape nodes. This is
//! what makes the gradient penalty trainable: the penalty is a function of
//! an input gradient, and differentiating it with respect to the weights is
//! just a second call to [`Tape::gradients`].

mod mlp;
mod tape;

pub use mlp::{Activation, Layer, MlpParams, ParamNodes};
pub use tape::{NodeId, Tape};

use thiserror::Error;

use crate::linalg::{LinalgError, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("gradient root must be scalar, got shape {shape:?}")]
    NonScalarRoot { shape: (usize, usize) },
    #[error("network input has {actual} columns, expected {expected}")]
    InputDim { expected: usize, actual: usize },
    #[error("network output dimension is {actual}, expected {expected}")]
    OutputDim { expected: usize, actual: usize },
    #[error("network has no layers")]
    NoLayers,
    #[error("layer {layer} bias has length {actual}, expected {expected}")]
    BiasLength { layer: usize, expected: usize, actual: usize },
    #[error("layer {layer} takes {actual} inputs but the previous layer emits {expected}")]
    LayerChain { layer: usize, expected: usize, actual: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Gradients of a scalar `loss` with respect to every parameter of a recorded
/// network. Parameters the loss does not reach get exact zeros.
pub fn param_gradients(tape: &mut Tape, loss: NodeId, params: &ParamNodes) -> Result<Vec<Layer>, AutodiffError> {
    let grads = tape.gradients(loss, &params.flat())?;
    Ok(params.collect(tape, &grads))
}

fn check_critic(net: &MlpParams) -> Result<(), AutodiffError> {
    if net.out_dim() != 1 {
        return Err(AutodiffError::OutputDim {
            expected: 1,
            actual: net.out_dim(),
        });
    }
    Ok(())
}

/// Records `∇ₓ f(x)` row by row for a scalar-output network. Since rows are
/// independent, the gradient of `Σᵢ f(xᵢ)` with respect to `x` holds each
/// row's own input gradient.
pub fn record_input_gradient(tape: &mut Tape, params: &ParamNodes, x: NodeId) -> Result<Option<NodeId>, AutodiffError> {
    let out = params.apply(tape, x)?;
    let total = tape.sum(out);
    Ok(tape.gradients(total, &[x])?[0])
}

/// Per-row gradient of a critic's scalar output with respect to its input.
pub fn input_gradient(net: &MlpParams, x: &Matrix) -> Result<Matrix, AutodiffError> {
    check_critic(net)?;
    if x.cols() != net.in_dim() {
        return Err(AutodiffError::InputDim {
            expected: net.in_dim(),
            actual: x.cols(),
        });
    }
    let mut tape = Tape::new();
    let params = net.leaves(&mut tape);
    let xn = tape.leaf(x.clone());
    Ok(match record_input_gradient(&mut tape, &params, xn)? {
        Some(g) => tape.value(g).clone(),
        None => Matrix::zeros(x.rows(), x.cols()),
    })
}

/// A recorded gradient penalty.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyNode {
    /// Scalar node holding the mean penalty over rows.
    pub value: NodeId,
    /// Rows whose input gradient is exactly zero. The norm is not
    /// differentiable there, so these rows contribute no parameter gradient.
    pub degenerate_rows: usize,
}

/// Records `mean_i (‖∇f(x̂ᵢ)‖ − 1)²`, or with `one_sided` the variant
/// `mean_i max(0, ‖∇f(x̂ᵢ)‖ − 1)²`, as a differentiable function of the
/// critic parameters.
pub fn record_penalty(tape: &mut Tape, params: &ParamNodes, x_hat: &Matrix, one_sided: bool) -> Result<PenaltyNode, AutodiffError> {
    let xn = tape.leaf(x_hat.clone());
    let grad = match record_input_gradient(tape, params, xn)? {
        Some(g) => g,
        None => tape.leaf(Matrix::zeros(x_hat.rows(), x_hat.cols())),
    };
    let norms = tape.row_norm(grad);
    let degenerate_rows = tape.value(norms).data().iter().filter(|&&n| n == 0.0).count();
    let shifted = tape.add_const(norms, -1.0);
    let excess = if one_sided { tape.max_const(shifted, 0.0) } else { shifted };
    let sq = tape.square(excess);
    let value = tape.mean(sq);
    Ok(PenaltyNode { value, degenerate_rows })
}

/// Value and parameter gradients of a gradient penalty.
#[derive(Debug, Clone)]
pub struct PenaltyGradients {
    pub value: f64,
    pub grads: Vec<Layer>,
    pub degenerate_rows: usize,
}

/// Gradient of the (two- or one-sided) gradient penalty with respect to the
/// critic parameters, obtained by differentiating through the input-gradient
/// backward pass.
pub fn penalty_param_gradients(net: &MlpParams, x_hat: &Matrix, one_sided: bool) -> Result<PenaltyGradients, AutodiffError> {
    check_critic(net)?;
    if x_hat.cols() != net.in_dim() {
        return Err(AutodiffError::InputDim {
            expected: net.in_dim(),
            actual: x_hat.cols(),
        });
    }
    let mut tape = Tape::new();
    let params = net.leaves(&mut tape);
    let penalty = record_penalty(&mut tape, &params, x_hat, one_sided)?;
    let grads = param_gradients(&mut tape, penalty.value, &params)?;
    Ok(PenaltyGradients {
        value: tape.scalar(penalty.value),
        grads,
        degenerate_rows: penalty.degenerate_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear_critic(w: &[f64]) -> MlpParams {
        MlpParams::new(vec![Layer {
            weight: Matrix::row_vector(w).unwrap(),
            bias: vec![0.0],
        }])
        .unwrap()
    }

    #[test]
    fn single_linear_layer_forward() {
        let w = Matrix::from_rows(&[&[1.0, 2.0], &[-1.0, 0.5], &[0.0, 3.0]]).unwrap();
        let net = MlpParams::new(vec![Layer { weight: w.clone(), bias: vec![0.0; 3] }]).unwrap();
        let x = Matrix::from_rows(&[&[1.0, -1.0], &[2.0, 0.5]]).unwrap();
        let expected = Matrix::gemm(&x, false, &w, true).unwrap();
        assert_eq!(net.forward(&x).unwrap(), expected);
    }

    #[test]
    fn dead_relu_layer_propagates_bias_only() {
        let first = Layer {
            weight: Matrix::from_rows(&[&[1.0, 1.0], &[2.0, 1.0]]).unwrap(),
            bias: vec![0.0, 0.0],
        };
        let second = Layer {
            weight: Matrix::from_rows(&[&[3.0, -4.0]]).unwrap(),
            bias: vec![0.75],
        };
        let net = MlpParams::new(vec![first, second]).unwrap();
        let x = Matrix::from_rows(&[&[-1.0, -2.0], &[-3.0, -0.5]]).unwrap();
        assert_eq!(net.forward(&x).unwrap().data(), &[0.75, 0.75]);
    }

    #[test]
    fn forward_rejects_bad_input_width() {
        let net = linear_critic(&[1.0, 2.0]);
        assert!(matches!(
            net.forward(&Matrix::zeros(3, 3)),
            Err(AutodiffError::InputDim { expected: 2, actual: 3 })
        ));
    }

    #[test]
    fn layer_chain_is_validated() {
        let a = Layer { weight: Matrix::zeros(3, 2), bias: vec![0.0; 3] };
        let b = Layer { weight: Matrix::zeros(1, 4), bias: vec![0.0] };
        assert!(matches!(MlpParams::new(vec![a.clone(), b]), Err(AutodiffError::LayerChain { .. })));
        let bad_bias = Layer { weight: Matrix::zeros(3, 2), bias: vec![0.0; 2] };
        assert!(matches!(MlpParams::new(vec![bad_bias]), Err(AutodiffError::BiasLength { .. })));
        assert!(MlpParams::new(vec![a]).is_ok());
    }

    #[test]
    fn linear_critic_input_gradient_is_weight() {
        let net = linear_critic(&[0.6, -0.8]);
        let x = Matrix::from_rows(&[&[1.0, 2.0], &[-3.0, 0.1], &[0.0, 0.0]]).unwrap();
        let g = input_gradient(&net, &x).unwrap();
        for i in 0..3 {
            assert_eq!(g.row(i), &[0.6, -0.8]);
        }
    }

    #[test]
    fn input_gradient_requires_scalar_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = MlpParams::init_uniform(&[2, 4, 2], &mut rng);
        assert!(matches!(
            input_gradient(&net, &Matrix::zeros(1, 2)),
            Err(AutodiffError::OutputDim { expected: 1, actual: 2 })
        ));
    }

    #[test]
    fn two_layer_all_active_gradient_is_weight_product() {
        // Positive weights and inputs keep every unit active, so
        // ∇f = W2 · W1 for every row.
        let w1 = Matrix::from_rows(&[&[1.0, 0.5], &[0.25, 2.0], &[1.5, 1.0]]).unwrap();
        let w2 = Matrix::from_rows(&[&[2.0, -1.0, 0.5]]).unwrap();
        let net = MlpParams::new(vec![
            Layer { weight: w1.clone(), bias: vec![0.1, 0.1, 0.1] },
            Layer { weight: w2.clone(), bias: vec![0.0] },
        ])
        .unwrap();
        let x = Matrix::from_rows(&[&[1.0, 1.0], &[0.5, 3.0]]).unwrap();
        let g = input_gradient(&net, &x).unwrap();
        // W2·W1 = (2·1 − 0.25 + 0.75, 2·0.5 − 2 + 0.5) = (2.5, −0.5)
        for i in 0..2 {
            assert_eq!(g.row(i), &[2.5, -0.5]);
        }
    }

    #[test]
    fn unit_norm_linear_critic_has_zero_penalty() {
        let net = linear_critic(&[0.6, 0.8]);
        let x = Matrix::from_rows(&[&[1.0, 2.0], &[-3.0, 0.1]]).unwrap();
        for one_sided in [false, true] {
            let p = penalty_param_gradients(&net, &x, one_sided).unwrap();
            assert!(p.value.abs() < 1e-15);
            assert!(p.grads.iter().all(|l| l.weight.max_abs() < 1e-15));
        }
    }

    #[test]
    fn scalar_critic_penalty_values() {
        let x = Matrix::column(&[0.3, -1.0, 2.0]).unwrap();
        let steep = linear_critic(&[2.0]);
        assert_eq!(penalty_param_gradients(&steep, &x, false).unwrap().value, 1.0);
        assert_eq!(penalty_param_gradients(&steep, &x, true).unwrap().value, 1.0);
        let shallow = linear_critic(&[0.5]);
        assert_eq!(penalty_param_gradients(&shallow, &x, false).unwrap().value, 0.25);
        assert_eq!(penalty_param_gradients(&shallow, &x, true).unwrap().value, 0.0);
        // d/dw (|w| − 1)² = 2(|w| − 1)·sign(w) = 2 at w = 2
        let g = penalty_param_gradients(&steep, &x, false).unwrap();
        assert_eq!(g.grads[0].weight.data(), &[2.0]);
        assert_eq!(g.grads[0].bias, vec![0.0]);
    }

    #[test]
    fn zero_gradient_rows_are_counted() {
        let net = linear_critic(&[0.0, 0.0]);
        let x = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let p = penalty_param_gradients(&net, &x, false).unwrap();
        assert_eq!(p.degenerate_rows, 2);
        assert_eq!(p.value, 1.0);
        assert!(p.grads[0].weight.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unreached_layer_has_exact_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MlpParams::init_uniform(&[2, 3, 1], &mut rng);
        let mut tape = Tape::new();
        let params = net.leaves(&mut tape);
        // loss only touches the first layer's bias through a side channel
        let b0 = params.layers[0].1;
        let loss = tape.sum(b0);
        let grads = param_gradients(&mut tape, loss, &params).unwrap();
        assert_eq!(grads[0].bias, vec![1.0; 3]);
        assert!(grads[0].weight.data().iter().all(|&v| v == 0.0));
        assert!(grads[1].weight.data().iter().all(|&v| v == 0.0));
        assert_eq!(grads[1].bias, vec![0.0]);
    }
}
