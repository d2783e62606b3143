mod common;

use common::*;
use orthowgan::linalg::{solve_linear, spectral_norm_default, svd, Matrix};
use orthowgan::ortho::{
    bjorck_orthogonalize, bjorck_step, cayley_update, gram_deviation, ortho_penalty, reshape_conv, svd_reinit,
    unreshape_conv, ConvTensor,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bjorck_step_maps_singular_values(values in prop::collection::vec(0.05f64..1.7, 1..12)) {
        let out = bjorck_step(&Matrix::diag(&values), 1).unwrap();
        for (i, s) in values.iter().enumerate() {
            let expect = s * (3.0 - s * s) / 2.0;
            prop_assert!((out[(i, i)] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn bjorck_reaches_the_polar_factor(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (iters, dev, err) = bjorck_case(&mut rng);
        prop_assert!(iters <= 40 && dev < 1e-8 && err < 1e-6, "{iters} {dev} {err}");
    }

    #[test]
    fn bjorck_agrees_with_svd_reinit(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = rng.gen_range(1..10);
        let (w, _) = tall_with_spectrum(cols + rng.gen_range(0..6), cols, 0.1, 1.3, &mut rng);
        let a = bjorck_orthogonalize(&w, 1e-12, 100).unwrap();
        let b = svd_reinit(&w, 1.0).unwrap();
        prop_assert!(a.sub(&b).unwrap().frobenius_norm() < 1e-6);
    }

    #[test]
    fn cayley_keeps_orthogonal_inputs_orthogonal(seed in any::<u64>(), tau in 1e-4f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..16);
        let cols = rng.gen_range(1..=n);
        let w = random_orthogonal(n, cols, &mut rng);
        let g = gaussian(n, cols, &mut rng);
        let before = gram_deviation(&w);
        let after = gram_deviation(&cayley_update(&w, &g, tau).unwrap());
        prop_assert!(after <= before + 1e-9, "{before} -> {after}");
        prop_assert!(after < 1e-10);
    }

    #[test]
    fn spectral_norm_is_homogeneous_and_matches_svd(seed in any::<u64>(), c in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = gaussian(rng.gen_range(1..12), rng.gen_range(1..12), &mut rng);
        let s = spectral_norm_default(&w);
        prop_assert!((spectral_norm_default(&w.scale(c)) - c.abs() * s).abs() < 1e-9 * (1.0 + s));
        prop_assert!((s - svd(&w).sigma[0]).abs() < 1e-8 * (1.0 + s));
    }

    #[test]
    fn solve_recovers_the_unknowns(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..16);
        let mut a = gaussian(n, n, &mut rng);
        for i in 0..n {
            a[(i, i)] += 2.0 * n as f64;
        }
        let x = gaussian(n, rng.gen_range(1..5), &mut rng);
        let b = a.matmul(&x).unwrap();
        prop_assert!(solve_linear(&a, &b).unwrap().sub(&x).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn conv_reshape_round_trips(dims in (1usize..4, 1usize..4, 1usize..5, 1usize..5)) {
        let (n, m, l, k) = dims;
        let data: Vec<f64> = (0..n * m * l * k).map(|i| i as f64 * 0.5 - 3.0).collect();
        let t = ConvTensor::new(n, m, l, k, data).unwrap();
        let w = reshape_conv(&t).unwrap();
        prop_assert_eq!(w.shape(), (n * m * l, k));
        prop_assert_eq!(unreshape_conv(&w, t.dims()).unwrap(), t);
    }
}

#[test]
fn ortho_penalty_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let (r, c) = (rng.gen_range(1..9), rng.gen_range(1..9));
        let w = gaussian(r, c, &mut rng).scale(0.5);
        let lambda = rng.gen_range(0.1..10.0);
        let (_, grad) = ortho_penalty(&w, lambda);
        let mut fd = Vec::with_capacity(w.len());
        for i in 0..w.len() {
            fd.push(central_diff(
                |d| {
                    let mut v = w.clone();
                    v.data_mut()[i] += d;
                    ortho_penalty(&v, lambda).0
                },
                1e-5,
            ));
        }
        let err = rel_error(grad.data(), &fd, 1e-8);
        assert!(err < 1e-6, "{r}x{c}: {err}");
    }
}

#[test]
fn ortho_penalty_vanishes_only_on_orthogonal_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (r, c) in [(6, 3), (3, 6), (5, 5)] {
        let q = random_orthogonal(r, c, &mut rng);
        assert!(ortho_penalty(&q, 10.0).0 < 1e-20);
        assert!(ortho_penalty(&q.scale(1.1), 10.0).0 > 0.1);
    }
}

#[test]
fn single_cayley_step_from_orthogonal_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in [4, 16, 64] {
        let w = random_orthogonal(n, n, &mut rng);
        let g = gaussian(n, n, &mut rng);
        assert!(gram_deviation(&cayley_update(&w, &g, 0.01).unwrap()) < 1e-10);
    }
}

#[test]
fn chained_cayley_drift_stays_at_roundoff_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let series = cayley_drift(16, 1000, 100, 0.01, &mut rng);
    let last = series.last().unwrap().1;
    assert!(last < 1e-11, "{series:?}");
}
