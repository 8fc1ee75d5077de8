//! Spectral normalization as a reparametrization `W = V / σ(V)`.
//!
//! The trainable matrix is the raw `V`; the layer uses `W = V / (uᵀVv)`,
//! where `u`, `v` are singular-vector estimates kept between training steps
//! and advanced by one power iteration per step. Gradients flow through `σ`
//! with `u`, `v` held fixed, which removes the component along `u vᵀ` and
//! keeps the rest of the spectrum from being shrunk step after step.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralNorm {
    raw: Array2<f64>,
    u: Array1<f64>,
    v: Array1<f64>,
}

fn unit(mut x: Array1<f64>) -> Option<Array1<f64>> {
    let n = x.dot(&x).sqrt();
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    x.mapv_inplace(|a| a / n);
    Some(x)
}

impl SpectralNorm {
    /// Wrap `raw` with a random left vector and one power iteration.
    pub fn new(raw: Array2<f64>, rng: &mut impl Rng) -> Self {
        let (rows, cols) = raw.dim();
        let u = unit(Array1::from_shape_simple_fn(rows, || StandardNormal.sample(rng))).expect("non-degenerate sample");
        let mut sn = Self {
            raw,
            u,
            v: Array1::zeros(cols),
        };
        sn.power_step();
        sn
    }

    pub fn from_parts(raw: Array2<f64>, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        check_dim(raw.nrows(), u.len())?;
        check_dim(raw.ncols(), v.len())?;
        Ok(Self {
            raw,
            u: Array1::from(u),
            v: Array1::from(v),
        })
    }

    pub fn raw(&self) -> &Array2<f64> {
        &self.raw
    }

    pub fn raw_mut(&mut self) -> &mut Array2<f64> {
        &mut self.raw
    }

    pub fn u(&self) -> &Array1<f64> {
        &self.u
    }

    pub fn v(&self) -> &Array1<f64> {
        &self.v
    }

    /// `uᵀVv` for the current vectors.
    pub fn sigma(&self) -> f64 {
        self.u.dot(&self.raw.dot(&self.v))
    }

    /// One iteration `v = Vᵀu/‖Vᵀu‖`, `u = Vv/‖Vv‖`. Returns `false` and
    /// leaves the vectors alone for a zero matrix.
    pub fn power_step(&mut self) -> bool {
        let Some(v) = unit(self.raw.t().dot(&self.u)) else {
            return false;
        };
        let Some(u) = unit(self.raw.dot(&v)) else {
            return false;
        };
        self.u = u;
        self.v = v;
        true
    }

    /// Normalized weight `V / σ`; the raw matrix itself when `σ` is not positive.
    pub fn effective(&self) -> Array2<f64> {
        let sigma = self.sigma();
        if sigma > 0.0 && sigma.is_finite() {
            self.raw.mapv(|w| w / sigma)
        } else {
            self.raw.clone()
        }
    }

    /// Pull a gradient with respect to `W = V/σ` back to `V`:
    /// `(G − ⟨G, W⟩ u vᵀ) / σ`.
    pub fn raw_gradient(&self, g: &Array2<f64>, w: &Array2<f64>) -> Array2<f64> {
        let sigma = self.sigma();
        if !(sigma > 0.0 && sigma.is_finite()) {
            return g.clone();
        }
        let inner: f64 = g.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        let mut out = g.clone();
        for ((i, j), o) in out.indexed_iter_mut() {
            *o = (*o - inner * self.u[i] * self.v[j]) / sigma;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::{Activation, Init, Layer};

    fn layer_with(w: Array2<f64>) -> Layer {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut layer = Layer::new(w.ncols(), w.nrows(), Activation::Identity, Init::Zeros, &mut rng);
        layer.set_weight(w).unwrap();
        layer.enable_spectral_norm(&mut rng);
        layer
    }

    #[test]
    fn diagonal_scaled_by_largest_value() {
        let mut layer = layer_with(ndarray::arr2(&[[2.0, 0.0], [0.0, 0.5]]));
        for _ in 0..50 {
            layer.spectral_normalize();
        }
        assert!((layer.weight()[[0, 0]] - 1.0).abs() < 1e-6);
        assert!((layer.weight()[[1, 1]] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_matrix_unchanged() {
        let (s, c) = 0.6f64.sin_cos();
        let w = ndarray::arr2(&[[c, -s], [s, c]]);
        let mut layer = layer_with(w.clone());
        for _ in 0..20 {
            layer.spectral_normalize();
        }
        for (a, b) in layer.weight().iter().zip(w.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_matrix_untouched() {
        let mut layer = layer_with(Array2::zeros((3, 2)));
        assert_eq!(layer.spectral_normalize(), None);
        assert!(layer.weight().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn raw_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw = Array2::from_shape_simple_fn((3, 4), || StandardNormal.sample(&mut rng));
        let sn = SpectralNorm::new(raw.clone(), &mut rng);
        let g = Array2::from_shape_simple_fn((3, 4), || StandardNormal.sample(&mut rng));
        let loss = |r: &Array2<f64>| -> f64 {
            let s = SpectralNorm::from_parts(r.clone(), sn.u.to_vec(), sn.v.to_vec()).unwrap();
            s.effective().iter().zip(g.iter()).map(|(a, b)| a * b).sum()
        };
        let analytic = sn.raw_gradient(&g, &sn.effective());
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..4 {
                let mut p = raw.clone();
                p[[i, j]] += h;
                let mut m = raw.clone();
                m[[i, j]] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!((fd - analytic[[i, j]]).abs() < 1e-7);
            }
        }
    }
}
