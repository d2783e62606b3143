//! Test oracles that do not touch the tape: a loop-based forward pass, the
//! closed-form ReLU input Jacobian, and central finite differences.

#![allow(dead_code)]

use orthowgan::autodiff::{Activation, Layer, MlpParams};
use orthowgan::linalg::Matrix;
use rand::Rng;

/// One scalar parameter of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coord {
    pub layer: usize,
    pub bias: bool,
    pub index: usize,
}

pub fn coords(net: &MlpParams) -> Vec<Coord> {
    let mut out = Vec::new();
    for (layer, l) in net.layers.iter().enumerate() {
        out.extend((0..l.weight.len()).map(|index| Coord { layer, bias: false, index }));
        out.extend((0..l.bias.len()).map(|index| Coord { layer, bias: true, index }));
    }
    out
}

pub fn get(net: &MlpParams, c: Coord) -> f64 {
    let l = &net.layers[c.layer];
    if c.bias {
        l.bias[c.index]
    } else {
        l.weight.data()[c.index]
    }
}

pub fn get_grad(grads: &[Layer], c: Coord) -> f64 {
    let l = &grads[c.layer];
    if c.bias {
        l.bias[c.index]
    } else {
        l.weight.data()[c.index]
    }
}

pub fn nudged(net: &MlpParams, c: Coord, delta: f64) -> MlpParams {
    let mut out = net.clone();
    let l = &mut out.layers[c.layer];
    if c.bias {
        l.bias[c.index] += delta;
    } else {
        l.weight.data_mut()[c.index] += delta;
    }
    out
}

fn assert_relu_linear(net: &MlpParams) {
    assert_eq!(net.hidden_activation, Activation::Relu);
    assert_eq!(net.output_activation, Activation::Linear);
}

/// Pre-activations of every layer for one input row, computed with loops.
pub fn preactivations(net: &MlpParams, x: &[f64]) -> Vec<Vec<f64>> {
    assert_relu_linear(net);
    let mut h = x.to_vec();
    let mut pre = Vec::with_capacity(net.layers.len());
    for (i, l) in net.layers.iter().enumerate() {
        let z: Vec<f64> = (0..l.out_dim())
            .map(|o| l.bias[o] + (0..l.in_dim()).map(|k| l.weight[(o, k)] * h[k]).sum::<f64>())
            .collect();
        h = if i + 1 < net.layers.len() { z.iter().map(|v| v.max(0.0)).collect() } else { z.clone() };
        pre.push(z);
    }
    pre
}

pub fn reference_forward(net: &MlpParams, x: &Matrix) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..x.rows()).map(|r| preactivations(net, x.row(r)).pop().unwrap()).collect();
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    Matrix::from_rows(&refs).unwrap()
}

/// Gradient of the summed outputs with respect to one input row:
/// `W₁ᵀ D₁ W₂ᵀ D₂ ⋯ W_Lᵀ 1` with `D` the ReLU masks.
pub fn reference_input_gradient(net: &MlpParams, x: &[f64]) -> Vec<f64> {
    let pre = preactivations(net, x);
    let last = net.layers.len() - 1;
    let mut delta = vec![1.0; net.layers[last].out_dim()];
    for i in (0..=last).rev() {
        let l = &net.layers[i];
        let mut back: Vec<f64> = (0..l.in_dim()).map(|k| (0..l.out_dim()).map(|o| l.weight[(o, k)] * delta[o]).sum()).collect();
        if i > 0 {
            for (b, p) in back.iter_mut().zip(&pre[i - 1]) {
                if *p <= 0.0 {
                    *b = 0.0;
                }
            }
        }
        delta = back;
    }
    delta
}

/// Mean of `(‖∇f(x̂)‖ − 1)²`, or of `max(0, ‖∇f(x̂)‖ − 1)²` when one-sided.
pub fn reference_penalty(net: &MlpParams, x_hat: &Matrix, one_sided: bool) -> f64 {
    let mut total = 0.0;
    for r in 0..x_hat.rows() {
        let g = reference_input_gradient(net, x_hat.row(r));
        let d = g.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0;
        total += if one_sided { d.max(0.0).powi(2) } else { d * d };
    }
    total / x_hat.rows() as f64
}

/// Smallest |pre-activation| over the hidden layers for any row of `x`.
pub fn min_hidden_margin(net: &MlpParams, x: &Matrix) -> f64 {
    let mut m = f64::INFINITY;
    for r in 0..x.rows() {
        let pre = preactivations(net, x.row(r));
        for layer in &pre[..pre.len() - 1] {
            for v in layer {
                m = m.min(v.abs());
            }
        }
    }
    m
}

/// `n` standard-normal rows, each resampled until every hidden
/// pre-activation is at least `margin` away from the ReLU kink.
pub fn kink_free_rows<R: Rng + ?Sized>(net: &MlpParams, n: usize, margin: f64, rng: &mut R) -> Matrix {
    let dim = net.in_dim();
    let mut rows = Vec::with_capacity(n);
    while rows.len() < n {
        let row: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let single = Matrix::from_rows(&[row.as_slice()]).unwrap();
        if min_hidden_margin(net, &single) > margin {
            rows.push(row);
        }
    }
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    Matrix::from_rows(&refs).unwrap()
}

pub fn central_diff(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

/// Central differences of `loss` along the given parameter coordinates.
pub fn fd_param_gradient(net: &MlpParams, cs: &[Coord], h: f64, loss: impl Fn(&MlpParams) -> f64) -> Vec<f64> {
    cs.iter().map(|&c| central_diff(|d| loss(&nudged(net, c, d)), h)).collect()
}

/// `‖a − b‖ / max(‖b‖, floor)`.
pub fn rel_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(floor)
}

/// Random 4-layer ReLU MLP with hidden widths in `[2, max_width]` and a
/// scalar output. Weights are scaled up from the default init so gradients
/// are not vanishingly small.
pub fn random_critic<R: Rng + ?Sized>(in_dim: usize, max_width: usize, rng: &mut R) -> MlpParams {
    let mut dims = vec![in_dim];
    for _ in 0..3 {
        dims.push(rng.gen_range(2..=max_width));
    }
    dims.push(1);
    let mut net = MlpParams::init_uniform(&dims, rng);
    for l in &mut net.layers {
        l.weight = l.weight.scale(1.5);
    }
    net
}

/// Up to `limit` coordinates chosen uniformly without replacement, always
/// including at least one weight and one bias of every layer.
pub fn sample_coords<R: Rng + ?Sized>(net: &MlpParams, limit: usize, rng: &mut R) -> Vec<Coord> {
    let all = coords(net);
    if all.len() <= limit {
        return all;
    }
    let mut picked: Vec<Coord> = Vec::new();
    for (layer, l) in net.layers.iter().enumerate() {
        picked.push(Coord { layer, bias: false, index: rng.gen_range(0..l.weight.len()) });
        picked.push(Coord { layer, bias: true, index: rng.gen_range(0..l.bias.len()) });
    }
    let chosen = rand::seq::index::sample(rng, all.len(), limit.saturating_sub(picked.len()));
    picked.extend(chosen.into_iter().map(|i| all[i]));
    picked.dedup();
    picked
}

/// Worst relative errors of one gradient check.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheck {
    pub param: f64,
    pub input: f64,
    pub penalty_two_sided: f64,
    pub penalty_one_sided: f64,
    /// Checks in which the one-sided penalty was nonzero.
    pub one_sided_active: usize,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.param.max(self.input).max(self.penalty_two_sided).max(self.penalty_one_sided)
    }

    pub fn merge(self, o: GradCheck) -> GradCheck {
        GradCheck {
            param: self.param.max(o.param),
            input: self.input.max(o.input),
            penalty_two_sided: self.penalty_two_sided.max(o.penalty_two_sided),
            penalty_one_sided: self.penalty_one_sided.max(o.penalty_one_sided),
            one_sided_active: self.one_sided_active + o.one_sided_active,
        }
    }
}

/// Rescales the output layer so the input-gradient norms at `x` straddle 1,
/// which makes the one-sided penalty active on some rows and not others.
/// No norm is left within 2% of 1, where the penalty has its hinge. Hidden
/// pre-activations, and hence kink margins, are unchanged.
pub fn straddle_unit_norm(net: &mut MlpParams, x: &Matrix) {
    let norms: Vec<f64> = (0..x.rows())
        .map(|r| reference_input_gradient(net, x.row(r)).iter().map(|v| v * v).sum::<f64>().sqrt())
        .filter(|&v| v > 0.0)
        .collect();
    let max = norms.iter().fold(0.0f64, |m, &v| m.max(v));
    if max == 0.0 {
        return;
    }
    let clear = |c: f64| norms.iter().all(|&v| (c * v - 1.0).abs() >= 0.02);
    let targets = [1.9, 1.7, 1.5, 1.3, 1.15];
    let c = targets
        .iter()
        .map(|t| t / max)
        .find(|&c| clear(c) && norms.iter().any(|&v| c * v < 1.0))
        .or_else(|| targets.iter().map(|t| t / max).find(|&c| clear(c)))
        .unwrap_or(1.5 / max);
    let last = net.layers.last_mut().expect("network has layers");
    last.weight = last.weight.scale(c);
    last.bias.iter_mut().for_each(|b| *b *= c);
}

/// Compares tape gradients of one random critic against central differences
/// of the loop-based oracles: parameter gradients of the mean output, input
/// gradients of the summed output, and parameter gradients of both gradient
/// penalties (a second-order quantity).
pub fn gradient_check_random_net<R: Rng + ?Sized>(rng: &mut R, max_coords: usize) -> GradCheck {
    use orthowgan::autodiff::{self, Tape};
    const H: f64 = 1e-6;
    const MARGIN: f64 = 1e-3;

    let in_dim = rng.gen_range(1..=8);
    let mut net = random_critic(in_dim, 64, rng);
    let n = rng.gen_range(2..=6);
    let x = kink_free_rows(&net, n, MARGIN, rng);
    straddle_unit_norm(&mut net, &x);

    let mut tape = Tape::new();
    let p = net.leaves(&mut tape);
    let xn = tape.leaf(x.clone());
    let out = p.apply(&mut tape, xn).unwrap();
    let loss = tape.mean(out);
    let grads = autodiff::param_gradients(&mut tape, loss, &p).unwrap();
    let cs = sample_coords(&net, max_coords, rng);
    let tape_g: Vec<f64> = cs.iter().map(|&c| get_grad(&grads, c)).collect();
    let fd_g = fd_param_gradient(&net, &cs, H, |m| reference_forward(m, &x).mean());
    let param = rel_error(&tape_g, &fd_g, 1e-8);

    let gx = autodiff::input_gradient(&net, &x).unwrap();
    let mut fd_x = Vec::new();
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            fd_x.push(central_diff(
                |d| {
                    let mut y = x.clone();
                    y[(r, c)] += d;
                    reference_forward(&net, &y).sum()
                },
                H,
            ));
        }
    }
    let input = rel_error(gx.data(), &fd_x, 1e-8);

    let mut penalty = [0.0; 2];
    let mut one_sided_active = 0;
    for (slot, one_sided) in [false, true].into_iter().enumerate() {
        let pg = autodiff::penalty_param_gradients(&net, &x, one_sided).unwrap();
        let reference = reference_penalty(&net, &x, one_sided);
        let value_err = (pg.value - reference).abs() / reference.abs().max(1e-8);
        let tape_pg: Vec<f64> = cs.iter().map(|&c| get_grad(&pg.grads, c)).collect();
        let fd_pg = fd_param_gradient(&net, &cs, H, |m| reference_penalty(m, &x, one_sided));
        penalty[slot] = rel_error(&tape_pg, &fd_pg, 1e-8).max(value_err);
        if one_sided && reference > 0.0 {
            one_sided_active = 1;
        }
    }
    GradCheck {
        param,
        input,
        penalty_two_sided: penalty[0],
        penalty_one_sided: penalty[1],
        one_sided_active,
    }
}

/// Largest `‖∇f(x)‖ − ∏ ‖Wᵢ‖₂` over `n_inputs` random inputs of one random
/// critic; non-positive when the product bound holds.
pub fn product_bound_excess<R: Rng + ?Sized>(rng: &mut R, n_inputs: usize) -> f64 {
    use orthowgan::linalg::spectral_norm_default;
    let in_dim = rng.gen_range(1..=8);
    let net = random_critic(in_dim, 64, rng);
    let bound: f64 = net.layers.iter().map(|l| spectral_norm_default(&l.weight)).product();
    let x = Matrix::from_fn(n_inputs, in_dim, |_, _| 3.0 * rng.sample::<f64, _>(rand_distr::StandardNormal));
    let g = orthowgan::autodiff::input_gradient(&net, &x).unwrap();
    g.row_norms().into_iter().map(|v| v - bound).fold(f64::NEG_INFINITY, f64::max)
}

/// Random matrix with orthonormal columns (rows if wide), from the polar
/// factor of a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let g = Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    orthowgan::ortho::svd_reinit(&g, 1.0).unwrap()
}

/// Tall `W = U·diag(σ)·Vᵀ` with each `σ` uniform on `[lo, hi]`, together with
/// its polar factor `U·Vᵀ` known by construction.
pub fn tall_with_spectrum<R: Rng + ?Sized>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> (Matrix, Matrix) {
    assert!(rows >= cols);
    let u = random_orthogonal(rows, cols, rng);
    let v = random_orthogonal(cols, cols, rng);
    let sigma: Vec<f64> = (0..cols).map(|_| rng.gen_range(lo..=hi)).collect();
    let w = u.matmul(&Matrix::diag(&sigma)).unwrap().matmul(&v.transpose()).unwrap();
    let polar = u.matmul(&v.transpose()).unwrap();
    (w, polar)
}

/// Björck convergence on one random tall matrix with spectrum in
/// `[0.1, 1.3]`: (iterations used, final gram deviation, Frobenius distance
/// to the polar factor).
pub fn bjorck_case<R: Rng + ?Sized>(rng: &mut R) -> (usize, f64, f64) {
    let cols = rng.gen_range(1..=24);
    let rows = cols + rng.gen_range(0..=24);
    let (w, polar) = tall_with_spectrum(rows, cols, 0.1, 1.3, rng);
    let (q, iters) = orthowgan::ortho::bjorck_orthogonalize_counted(&w, 1e-8, 40).unwrap();
    let dev = orthowgan::ortho::gram_deviation(&q);
    (iters, dev, q.sub(&polar).unwrap().frobenius_norm())
}

/// Gram deviation after every `every` of `steps` chained Cayley updates on
/// an `n×n` orthogonal start with fresh Gaussian gradients.
pub fn cayley_drift<R: Rng + ?Sized>(n: usize, steps: usize, every: usize, tau: f64, rng: &mut R) -> Vec<(usize, f64)> {
    let mut w = random_orthogonal(n, n, rng);
    let mut out = vec![(0, orthowgan::ortho::gram_deviation(&w))];
    for s in 1..=steps {
        let g = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        w = orthowgan::ortho::cayley_update(&w, &g, tau).unwrap();
        if s % every == 0 {
            out.push((s, orthowgan::ortho::gram_deviation(&w)));
        }
    }
    out
}
