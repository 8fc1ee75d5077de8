//! Influence score of a closed-form model whose next-state mean depends on the
//! sign of the action, against the true mutual information, over separations.
//!
//! `cargo run --release --example cai_analytic`

use cai_lab::cai::{cai_score, entropy_score, AnalyticModel, CaiConfig};
use cai_lab::gaussian::{normal_pdf, DiagGaussian};

/// Mixture entropy minus component entropy, by trapezoidal quadrature.
fn true_cmi(m: f64, v: f64) -> f64 {
    let sd = v.sqrt();
    let (lo, hi, n) = (-m - 12.0 * sd, m + 12.0 * sd, 100_000);
    let h = (hi - lo) / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let x = lo + i as f64 * h;
        let p = 0.5 * normal_pdf(x, m, v) + 0.5 * normal_pdf(x, -m, v);
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        if p > 0.0 {
            acc -= w * p * p.ln();
        }
    }
    acc * h - 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * v).ln()
}

fn main() -> cai_lab::Result<()> {
    let cfg = CaiConfig::with_k(256);
    println!("m/sd   true    cai     entropy");
    for m in [0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0] {
        let model = AnalyticModel {
            state_dim: 1,
            action_dim: 1,
            f: move |_: &[f64], a: &[f64]| DiagGaussian::new(vec![if a[0] >= 0.0 { m } else { -m }], vec![1.0]).unwrap(),
        };
        let c = cai_score(&model, &[0.0], &cfg, &mut cfg.rng())?.value;
        let h = entropy_score(&model, &[0.0], &cfg, &mut cfg.rng())?;
        println!("{m:<5}  {:.4}  {c:.4}  {h:.4}", true_cmi(m, 1.0));
    }
    Ok(())
}
