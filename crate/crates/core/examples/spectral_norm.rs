//! Power-iteration estimate of a matrix's spectral norm converging toward the
//! top singular value, and the normalized weight it produces.
//!
//! `cargo run --release --example spectral_norm`

use cai_lab::nn::SpectralNorm;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let raw = Array2::from_shape_simple_fn((16, 8), || rng.random_range(-1.0..1.0));
    let mut sn = SpectralNorm::new(raw, &mut rng);
    for i in 1..=30 {
        if i == 1 || i % 5 == 0 {
            println!("iteration {i:>2}: sigma {:.6}", sn.sigma());
        }
        sn.power_step();
    }
    let w = sn.effective();
    let frob = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    println!("normalized weight Frobenius norm {frob:.4} (spectral norm 1 by construction)");
}
