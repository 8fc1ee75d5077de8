//! Lower, upper, and midpoint KL approximations between a Gaussian and a
//! mixture, next to a Monte Carlo estimate.
//!
//! `cargo run --release --example kl_bounds`

use cai_lab::gaussian::{kl_exact, kl_mixture_lower, kl_mixture_mean, kl_mixture_upper, DiagGaussian, GaussMixture};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> cai_lab::Result<()> {
    let f = DiagGaussian::new(vec![0.3, -0.2], vec![0.5, 1.2])?;
    let g = GaussMixture::new(
        vec![0.2, 0.5, 0.3],
        vec![
            DiagGaussian::new(vec![1.0, 0.0], vec![0.4, 0.8])?,
            DiagGaussian::new(vec![-0.5, 0.5], vec![1.0, 1.0])?,
            DiagGaussian::new(vec![0.0, -1.5], vec![2.0, 0.3])?,
        ],
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 200_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let x: Vec<f64> = f
            .mean()
            .iter()
            .zip(f.var())
            .map(|(m, v)| { let z: f64 = StandardNormal.sample(&mut rng); m + v.sqrt() * z })
            .collect();
        sum += f.log_pdf(&x) - g.log_pdf(&x);
    }
    println!("lower    {:.4}", kl_mixture_lower(&f, &g)?);
    println!("monte    {:.4}", sum / n as f64);
    println!("upper    {:.4}", kl_mixture_upper(&f, &g)?);
    println!("midpoint {:.4}", kl_mixture_mean(&f, &g)?);
    let single = GaussMixture::uniform(vec![g.components()[0].clone()])?;
    println!(
        "one component: upper {:.6} exact {:.6}",
        kl_mixture_upper(&f, &single)?,
        kl_exact(&f, &g.components()[0])?
    );
    Ok(())
}
