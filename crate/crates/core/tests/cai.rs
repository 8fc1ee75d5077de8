//! Influence estimator against a quadrature oracle and under action ablation.

mod common;

use cai_lab::cai::{cai_score, CaiConfig, PredictiveModel};
use cai_lab::gaussian::{kl_mixture_lower, GaussMixture};
use cai_lab::model::{ModelConfig, TransitionModel};
use common::{two_means, two_means_cmi};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn quadrature_oracle_limits() {
    assert!(two_means_cmi(0.0, 0.3).abs() < 1e-9);
    assert!((two_means_cmi(50.0, 0.3) - 2f64.ln()).abs() < 1e-9);
    // monotone in separation
    let v: Vec<f64> = [0.2, 0.5, 1.0, 2.0].iter().map(|m| two_means_cmi(*m, 1.0)).collect();
    assert!(v.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn estimate_within_five_percent_at_moderate_separation() {
    let v: f64 = 0.04;
    for ratio in [0.6, 1.75, 2.0] {
        let m = ratio * v.sqrt();
        let truth = two_means_cmi(m, v);
        for seed in 0..3 {
            let cfg = CaiConfig { k: 256, seed, ..CaiConfig::default() };
            let c = cai_score(&two_means(m, v), &[0.0], &cfg, &mut cfg.rng()).unwrap().value;
            assert!((c / truth - 1.0).abs() <= 0.05, "m/sd {ratio}: {c} vs {truth}");
        }
    }
}

#[test]
fn lower_bound_estimate_never_exceeds_true_influence() {
    for ratio in [0.3, 0.6, 1.0, 1.5, 2.0, 3.0, 6.0] {
        let m = ratio;
        let truth = two_means_cmi(m, 1.0);
        let model = two_means(m, 1.0);
        let cfg = CaiConfig::with_k(256);
        let actions = cfg.sample_actions(&mut cfg.rng()).unwrap();
        let preds = model.predict_actions(&[0.0], &actions).unwrap();
        let mix = GaussMixture::uniform(preds.clone()).unwrap();
        let est: f64 = preds.iter().map(|p| kl_mixture_lower(p, &mix).unwrap().max(0.0)).sum::<f64>() / 256.0;
        assert!(est <= truth + 1e-6, "m/sd {ratio}: {est} > {truth}");
    }
}

#[test]
fn ablated_model_scores_exactly_zero() {
    let cfg = ModelConfig { hidden: vec![32, 32], ..ModelConfig::default() };
    let mut model = TransitionModel::new(cfg, 3).unwrap();
    model.ablate_action();
    let cai = CaiConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..500 {
        let s: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_eq!(cai_score(&model, &s, &cai, &mut rng).unwrap().value, 0.0);
    }
}
