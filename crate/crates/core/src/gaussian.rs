//! Diagonal Gaussians, finite Gaussian mixtures, and the divergences between them.
//!
//! KL divergence from a single Gaussian `f` to a mixture `g` has no closed form.
//! It is bracketed by two tractable quantities built on the decomposition
//! `KL(f‖g) = H(f, g) − H(f)`:
//!
//! * a lower bound from the product-of-Gaussians normalizers
//!   `t_b = ∫ f(x) g_b(x) dx` ([`kl_mixture_lower`]),
//! * an upper bound from the pairwise closed-form divergences `KL(f‖g_b)`
//!   ([`kl_mixture_upper`]),
//!
//! and their average, thresholded at zero, is the working estimate
//! ([`kl_mixture_mean`]). All quantities are in nats.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Variances are floored at this value inside every divergence formula.
pub const VAR_FLOOR: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::InvalidDistribution("dimension must be at least 1".into()));
        }
        check_dim(mean.len(), var.len())?;
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidDistribution("mean must be finite".into()));
        }
        if var.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidDistribution(
                "variance must be finite and strictly positive".into(),
            ));
        }
        Ok(Self { mean, var })
    }

    /// Standard normal in `dim` dimensions.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    /// Log density at `x`.
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.var)
            .zip(x)
            .map(|((m, v), xi)| {
                let v = v.max(VAR_FLOOR);
                -0.5 * (LN_2PI + v.ln() + (xi - m).powi(2) / v)
            })
            .sum()
    }

    /// Shift the mean by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Self {
        Self {
            mean: self.mean.iter().zip(offset).map(|(m, o)| m + o).collect(),
            var: self.var.clone(),
        }
    }
}

/// Finite mixture of diagonal Gaussians sharing one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussMixture {
    weights: Vec<f64>,
    components: Vec<DiagGaussian>,
}

impl GaussMixture {
    pub fn new(weights: Vec<f64>, components: Vec<DiagGaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidDistribution("mixture needs at least one component".into()));
        }
        check_dim(components.len(), weights.len())?;
        let d = components[0].dim();
        for c in &components {
            check_dim(d, c.dim())?;
        }
        if weights.iter().any(|w| !(*w > 0.0 && *w <= 1.0)) {
            return Err(Error::InvalidDistribution("weights must lie in (0, 1]".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            weights,
            components,
        })
    }

    /// Equal-weight mixture over `components`.
    pub fn uniform(components: Vec<DiagGaussian>) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return Err(Error::InvalidDistribution("mixture needs at least one component".into()));
        }
        Self::new(vec![1.0 / n as f64; n], components)
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[DiagGaussian] {
        &self.components
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        log_sum_exp(
            self.weights
                .iter()
                .zip(&self.components)
                .map(|(w, c)| w.ln() + c.log_pdf(x)),
        )
    }

    pub fn translated(&self, offset: &[f64]) -> Self {
        Self {
            weights: self.weights.clone(),
            components: self.components.iter().map(|c| c.translated(offset)).collect(),
        }
    }
}

/// Numerically stable `log Σ exp(x_i)`. Returns `-inf` for an empty input.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Differential entropy `½ Σ_k log(2πe σ²_k)`.
pub fn entropy(g: &DiagGaussian) -> f64 {
    g.var
        .iter()
        .map(|v| 0.5 * (LN_2PI + 1.0 + v.max(VAR_FLOOR).ln()))
        .sum()
}

/// Closed-form `KL(f‖g)` for diagonal Gaussians.
pub fn kl_exact(f: &DiagGaussian, g: &DiagGaussian) -> Result<f64> {
    check_dim(f.dim(), g.dim())?;
    Ok(kl_diag(f, g))
}

fn kl_diag(f: &DiagGaussian, g: &DiagGaussian) -> f64 {
    let mut acc = 0.0;
    for k in 0..f.mean.len() {
        let vf = f.var[k].max(VAR_FLOOR);
        let vg = g.var[k].max(VAR_FLOOR);
        let diff = g.mean[k] - f.mean[k];
        acc += (vg / vf).ln() + vf / vg + diff * diff / vg - 1.0;
    }
    // rounding can leave a tiny negative residue for near-identical inputs
    (0.5 * acc).max(0.0)
}

/// `log ∫ f(x) g(x) dx`, the log normalizer of the product of two Gaussians.
pub fn log_prod_norm(f: &DiagGaussian, g: &DiagGaussian) -> Result<f64> {
    check_dim(f.dim(), g.dim())?;
    Ok(log_prod_norm_diag(f, g))
}

fn log_prod_norm_diag(f: &DiagGaussian, g: &DiagGaussian) -> f64 {
    let mut acc = 0.0;
    for k in 0..f.mean.len() {
        let s = f.var[k].max(VAR_FLOOR) + g.var[k].max(VAR_FLOOR);
        let diff = g.mean[k] - f.mean[k];
        acc += LN_2PI + s.ln() + diff * diff / s;
    }
    -0.5 * acc
}

/// Lower bound on `KL(f‖g)`: `−log Σ_b ω_b t_fb − H(f)`.
pub fn kl_mixture_lower(f: &DiagGaussian, g: &GaussMixture) -> Result<f64> {
    check_dim(g.dim(), f.dim())?;
    let log_cross = log_sum_exp(
        g.weights
            .iter()
            .zip(&g.components)
            .map(|(w, c)| w.ln() + log_prod_norm_diag(f, c)),
    );
    Ok(-log_cross - entropy(f))
}

/// Upper bound on `KL(f‖g)`: `−log Σ_b ω_b exp(−KL(f‖g_b))`.
pub fn kl_mixture_upper(f: &DiagGaussian, g: &GaussMixture) -> Result<f64> {
    check_dim(g.dim(), f.dim())?;
    if g.len() == 1 {
        return Ok(kl_diag(f, &g.components[0]));
    }
    let lse = log_sum_exp(
        g.weights
            .iter()
            .zip(&g.components)
            .map(|(w, c)| w.ln() - kl_diag(f, c)),
    );
    Ok(-lse)
}

/// Average of [`kl_mixture_lower`] and [`kl_mixture_upper`], clamped at zero.
pub fn kl_mixture_mean(f: &DiagGaussian, g: &GaussMixture) -> Result<f64> {
    let lower = kl_mixture_lower(f, g)?;
    let upper = kl_mixture_upper(f, g)?;
    Ok((0.5 * (lower + upper)).max(0.0))
}

/// Gaussian density in one dimension; used by quadrature-based checks.
pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}
