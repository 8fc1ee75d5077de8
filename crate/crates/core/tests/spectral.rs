//! Spectral normalization against a full SVD.

use cai_lab::nn::SpectralNorm;
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn top_singular(a: &Array2<f64>) -> f64 {
    let m = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]]);
    m.singular_values().max()
}

#[test]
fn power_iteration_converges_to_largest_singular_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let (r, c) = (rng.random_range(1..20), rng.random_range(1..20));
        let raw = Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0));
        let mut sn = SpectralNorm::new(raw.clone(), &mut rng);
        for _ in 0..2000 {
            sn.power_step();
        }
        let truth = top_singular(&raw);
        assert!((sn.sigma() - truth).abs() <= 1e-8 * truth, "{} vs {truth}", sn.sigma());
        assert!((top_singular(&sn.effective()) - 1.0).abs() <= 1e-8);
    }
}

#[test]
fn estimate_never_exceeds_the_true_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..30 {
        let raw = Array2::from_shape_simple_fn((8, 5), || rng.random_range(-1.0..1.0));
        let mut sn = SpectralNorm::new(raw.clone(), &mut rng);
        let truth = top_singular(&raw);
        let mut prev = 0.0;
        for _ in 0..20 {
            let s = sn.sigma();
            assert!(s <= truth * (1.0 + 1e-12));
            assert!(s >= prev - 1e-12);
            prev = s;
            sn.power_step();
        }
    }
}
