use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Moment accumulators for one parameter set, bias-corrected Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    /// State shaped like a list of parameter slices.
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn for_mlp(config: AdamConfig, net: &Mlp) -> Self {
        let shapes: Vec<usize> = net
            .layers()
            .iter()
            .flat_map(|l| [l.weight().len(), l.bias.len()])
            .collect();
        Self::new(config, &shapes)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Update `params` in place from `grads`. Rejects non-finite gradients
    /// before touching any state.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        check_dim(self.first.len(), params.len())?;
        check_dim(self.first.len(), grads.len())?;
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            check_dim(m.len(), p.len())?;
            check_dim(m.len(), g.len())?;
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("gradient"));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn step_mlp(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        let g = grads.slices();
        let mut p = net.param_slices_mut();
        self.step(&mut p, &g)?;
        net.refresh();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_noop() {
        let mut st = AdamState::new(AdamConfig::with_lr(0.1), &[2]);
        let mut w = [1.0, -3.0];
        for _ in 0..5 {
            st.step(&mut [&mut w[..]], &[&[0.0, 0.0][..]]).unwrap();
        }
        assert_eq!(w, [1.0, -3.0]);
        assert_eq!(st.steps(), 5);
    }

    #[test]
    fn descends_on_quadratic() {
        let mut st = AdamState::new(AdamConfig::with_lr(0.1), &[1]);
        let mut w = [1.0];
        let g = [w[0]];
        st.step(&mut [&mut w[..]], &[&g[..]]).unwrap();
        assert!(w[0] < 1.0);

        let mut w = [1.0];
        let mut st = AdamState::new(AdamConfig::with_lr(0.1), &[1]);
        for _ in 0..200 {
            let g = [w[0]];
            st.step(&mut [&mut w[..]], &[&g[..]]).unwrap();
        }
        assert!(w[0].abs() < 1e-2, "w = {}", w[0]);
    }

    #[test]
    fn rejects_non_finite() {
        let mut st = AdamState::new(AdamConfig::default(), &[1]);
        let mut w = [1.0];
        assert!(st.step(&mut [&mut w[..]], &[&[f64::NAN][..]]).is_err());
        assert_eq!(w, [1.0]);
        assert_eq!(st.steps(), 0);
        assert!(st.step(&mut [&mut w[..]], &[&[1.0, 2.0][..]]).is_err());
    }
}
