//! Causal action influence: how much the next object state depends on the
//! action taken in `s`.
//!
//! The score is the conditional mutual information `I(S′_j; A | S = s)` under
//! a uniform action policy. With `K` uniformly sampled actions it is
//! estimated as `(1/K) Σ_i KL(p(s′|s,a_i) ‖ (1/K) Σ_k p(s′|s,a_k))`, each KL
//! term approximated by the midpoint of closed-form bounds. The mixture
//! includes the component itself.

use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::{entropy, kl_mixture_mean, DiagGaussian, GaussMixture};
use crate::model::TransitionModel;

/// Anything that maps `(s, a)` to a diagonal Gaussian over the next object state.
pub trait PredictiveModel {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;

    fn predict_one(&self, s: &[f64], a: &[f64]) -> Result<DiagGaussian>;

    /// Predictions for one state under several actions.
    fn predict_actions(&self, s: &[f64], actions: &[Vec<f64>]) -> Result<Vec<DiagGaussian>> {
        actions.iter().map(|a| self.predict_one(s, a)).collect()
    }
}

impl PredictiveModel for TransitionModel {
    fn state_dim(&self) -> usize {
        self.config().state_dim
    }

    fn action_dim(&self) -> usize {
        self.config().action_dim
    }

    fn predict_one(&self, s: &[f64], a: &[f64]) -> Result<DiagGaussian> {
        self.predict(s, a)
    }

    fn predict_actions(&self, s: &[f64], actions: &[Vec<f64>]) -> Result<Vec<DiagGaussian>> {
        let (sd, ad) = (self.state_dim(), self.action_dim());
        check_dim(sd, s.len())?;
        let mut flat = Vec::with_capacity(actions.len() * (sd + ad));
        for a in actions {
            check_dim(ad, a.len())?;
            flat.extend_from_slice(s);
            flat.extend_from_slice(a);
        }
        let x = ndarray::Array2::from_shape_vec((actions.len(), sd + ad), flat).expect("rows checked");
        let (mean, var) = self.predict_batch(x.view())?;
        mean.rows()
            .into_iter()
            .zip(var.rows())
            .map(|(m, v)| DiagGaussian::new(m.to_vec(), v.to_vec()))
            .collect()
    }
}

/// A model given by a closed-form function, for analytic checks and demos.
pub struct AnalyticModel<F> {
    pub state_dim: usize,
    pub action_dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &[f64]) -> DiagGaussian> PredictiveModel for AnalyticModel<F> {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn predict_one(&self, s: &[f64], a: &[f64]) -> Result<DiagGaussian> {
        check_dim(self.state_dim, s.len())?;
        check_dim(self.action_dim, a.len())?;
        Ok((self.f)(s, a))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaiConfig {
    /// Number of sampled actions.
    pub k: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub seed: u64,
}

impl Default for CaiConfig {
    fn default() -> Self {
        Self {
            k: 64,
            action_low: vec![-1.0],
            action_high: vec![1.0],
            seed: 0,
        }
    }
}

impl CaiConfig {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidArgument(format!("K must be at least 2, got {}", self.k)));
        }
        check_dim(self.action_low.len(), self.action_high.len())?;
        if self.action_low.is_empty() {
            return Err(Error::InvalidArgument("empty action box".into()));
        }
        for (lo, hi) in self.action_low.iter().zip(&self.action_high) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!("bad action bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn action_dim(&self) -> usize {
        self.action_low.len()
    }

    /// Fresh generator seeded from `seed`.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// `K` i.i.d. uniform draws from the action box.
    pub fn sample_actions<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let dists: Vec<Uniform<f64>> = self
            .action_low
            .iter()
            .zip(&self.action_high)
            .map(|(&lo, &hi)| Uniform::new_inclusive(lo, hi).expect("bounds validated"))
            .collect();
        Ok((0..self.k)
            .map(|_| dists.iter().map(|d| d.sample(rng)).collect())
            .collect())
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.action_dim()
            && a.iter()
                .zip(self.action_low.iter().zip(&self.action_high))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaiScore {
    /// Estimated influence in nats, never negative.
    pub value: f64,
}

/// Per-action KL terms `KL(p_i ‖ (1/K) Σ_k p_k)` for a set of predictions.
pub fn influence_terms(predictions: &[DiagGaussian]) -> Result<Vec<f64>> {
    let mixture = GaussMixture::uniform(predictions.to_vec())?;
    predictions.iter().map(|p| kl_mixture_mean(p, &mixture)).collect()
}

fn check_model(model: &impl PredictiveModel, s: &[f64], cfg: &CaiConfig) -> Result<()> {
    cfg.validate()?;
    check_dim(model.state_dim(), s.len())?;
    check_dim(model.action_dim(), cfg.action_dim())
}

/// Sampled actions with their KL terms.
pub fn sampled_terms<R: Rng + ?Sized>(
    model: &impl PredictiveModel,
    s: &[f64],
    cfg: &CaiConfig,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    check_model(model, s, cfg)?;
    let actions = cfg.sample_actions(rng)?;
    let preds = model.predict_actions(s, &actions)?;
    let terms = influence_terms(&preds)?;
    Ok((actions, terms))
}

pub fn cai_score<R: Rng + ?Sized>(model: &impl PredictiveModel, s: &[f64], cfg: &CaiConfig, rng: &mut R) -> Result<CaiScore> {
    let (_, terms) = sampled_terms(model, s, cfg, rng)?;
    let value = terms.iter().sum::<f64>() / terms.len() as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite("influence score"));
    }
    Ok(CaiScore { value })
}

/// Mean predictive entropy over `K` uniform actions, the conditional-entropy baseline.
pub fn entropy_score<R: Rng + ?Sized>(model: &impl PredictiveModel, s: &[f64], cfg: &CaiConfig, rng: &mut R) -> Result<f64> {
    check_model(model, s, cfg)?;
    let actions = cfg.sample_actions(rng)?;
    let preds = model.predict_actions(s, &actions)?;
    Ok(preds.iter().map(entropy).sum::<f64>() / preds.len() as f64)
}

/// Both scores from one set of sampled actions.
pub fn score_both<R: Rng + ?Sized>(model: &impl PredictiveModel, s: &[f64], cfg: &CaiConfig, rng: &mut R) -> Result<(f64, f64)> {
    check_model(model, s, cfg)?;
    let actions = cfg.sample_actions(rng)?;
    let preds = model.predict_actions(s, &actions)?;
    let terms = influence_terms(&preds)?;
    let k = preds.len() as f64;
    Ok((terms.iter().sum::<f64>() / k, preds.iter().map(entropy).sum::<f64>() / k))
}

/// The sampled action whose KL term is largest; the earliest sample wins ties,
/// so a model with no action dependence yields a plain uniform draw.
pub fn select_influential_action<R: Rng + ?Sized>(
    model: &impl PredictiveModel,
    s: &[f64],
    cfg: &CaiConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (mut actions, terms) = sampled_terms(model, s, cfg, rng)?;
    let mut best = 0;
    for (i, &t) in terms.iter().enumerate() {
        if t > terms[best] {
            best = i;
        }
    }
    Ok(actions.swap_remove(best))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_means(m: f64, v: f64) -> AnalyticModel<impl Fn(&[f64], &[f64]) -> DiagGaussian> {
        AnalyticModel {
            state_dim: 1,
            action_dim: 1,
            f: move |_: &[f64], a: &[f64]| {
                let mu = if a[0] >= 0.0 { m } else { -m };
                DiagGaussian::new(vec![mu], vec![v]).unwrap()
            },
        }
    }

    fn constant(var: f64, d: usize) -> AnalyticModel<impl Fn(&[f64], &[f64]) -> DiagGaussian> {
        AnalyticModel {
            state_dim: 2,
            action_dim: 1,
            f: move |s: &[f64], _: &[f64]| DiagGaussian::new(vec![s[0]; d], vec![var; d]).unwrap(),
        }
    }

    #[test]
    fn action_independent_model_scores_zero() {
        let m = constant(0.3, 2);
        let cfg = CaiConfig::default();
        for s in [[0.0, 0.0], [5.0, -1.0]] {
            assert_eq!(cai_score(&m, &s, &cfg, &mut cfg.rng()).unwrap().value, 0.0);
        }
    }

    #[test]
    fn entropy_closed_forms() {
        let cfg = CaiConfig::default();
        let h = entropy_score(&constant(1.0, 1), &[0.2, 0.1], &cfg, &mut cfg.rng()).unwrap();
        assert!((h - 1.418939).abs() < 1e-6);
        let h = entropy_score(&constant(std::f64::consts::E, 2), &[0.2, 0.1], &cfg, &mut cfg.rng()).unwrap();
        assert!((h - 3.837877).abs() < 1e-6);
    }

    #[test]
    fn fully_separated_two_means_closed_form() {
        // Cross terms vanish, so each term is log(K/n_i) − (1 − ln 2)/4 with
        // n_i the number of samples sharing component i's sign.
        let m = two_means(1e3, 0.01);
        let cfg = CaiConfig::with_k(256);
        let actions = cfg.sample_actions(&mut cfg.rng()).unwrap();
        let pos = actions.iter().filter(|a| a[0] >= 0.0).count() as f64;
        let k = 256.0;
        let offset = (1.0 - 2f64.ln()) / 4.0;
        let expected = (pos * (k / pos).ln() + (k - pos) * (k / (k - pos)).ln()) / k - offset;
        let c = cai_score(&m, &[0.0], &cfg, &mut cfg.rng()).unwrap().value;
        assert!((c - expected).abs() < 1e-9, "{c} vs {expected}");
    }

    #[test]
    fn permutation_of_predictions_is_irrelevant() {
        let preds: Vec<DiagGaussian> = (0..16)
            .map(|i| DiagGaussian::new(vec![(i as f64 * 0.37).sin(), 0.1 * i as f64], vec![0.2 + 0.01 * i as f64, 0.5]).unwrap())
            .collect();
        let mean = |p: &[DiagGaussian]| influence_terms(p).unwrap().iter().sum::<f64>() / p.len() as f64;
        let mut rev = preds.clone();
        rev.reverse();
        assert!((mean(&preds) - mean(&rev)).abs() < 1e-9);
    }

    #[test]
    fn ablated_selection_returns_first_sample() {
        let m = constant(0.3, 2);
        let cfg = CaiConfig::with_k(32);
        let first = cfg.sample_actions(&mut cfg.rng()).unwrap()[0].clone();
        let chosen = select_influential_action(&m, &[0.1, 0.2], &cfg, &mut cfg.rng()).unwrap();
        assert_eq!(chosen, first);
    }

    #[test]
    fn linear_model_selects_most_extreme_action() {
        let m = AnalyticModel {
            state_dim: 1,
            action_dim: 1,
            f: |_: &[f64], a: &[f64]| DiagGaussian::new(vec![a[0]], vec![0.05]).unwrap(),
        };
        let cfg = CaiConfig { k: 16, seed: 9, ..CaiConfig::default() };
        let actions = cfg.sample_actions(&mut cfg.rng()).unwrap();
        let center = actions.iter().map(|a| a[0]).sum::<f64>() / 16.0;
        let expected = actions
            .iter()
            .max_by(|x, y| (x[0] - center).abs().total_cmp(&(y[0] - center).abs()))
            .unwrap();
        let chosen = select_influential_action(&m, &[0.0], &cfg, &mut cfg.rng()).unwrap();
        assert_eq!(&chosen, expected);
        assert!(cfg.contains(&chosen));
    }

    #[test]
    fn config_validation() {
        assert!(CaiConfig::with_k(1).validate().is_err());
        let bad = CaiConfig { action_low: vec![1.0], action_high: vec![1.0], ..CaiConfig::default() };
        assert!(bad.validate().is_err());
        let m = constant(1.0, 1);
        assert!(cai_score(&m, &[0.0], &CaiConfig::default(), &mut CaiConfig::default().rng()).is_err());
    }
}
