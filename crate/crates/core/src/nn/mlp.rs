use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::spectral::SpectralNorm;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    /// Derivative expressed through the activation's output.
    fn grad_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }

    /// Init gain: √2 for relu, 1 otherwise.
    pub fn gain(self) -> f64 {
        match self {
            Activation::Relu => std::f64::consts::SQRT_2,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Orthogonal,
    XavierUniform,
    Zeros,
}

/// Affine map followed by an elementwise activation. The weight is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    spectral: Option<SpectralNorm>,
}

impl Layer {
    pub fn new(inputs: usize, outputs: usize, activation: Activation, init: Init, rng: &mut impl Rng) -> Self {
        let weight = match init {
            Init::Zeros => Array2::zeros((outputs, inputs)),
            Init::XavierUniform => {
                let bound = activation.gain() * (6.0 / (inputs + outputs) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                Array2::from_shape_simple_fn((outputs, inputs), || dist.sample(rng))
            }
            Init::Orthogonal => orthogonal(outputs, inputs, rng) * activation.gain(),
        };
        Self {
            weight,
            bias: Array1::zeros(outputs),
            activation,
            spectral: None,
        }
    }

    /// Rebuild a layer from its trainable weight; with spectral state the
    /// weight is the raw matrix and the used weight is derived from it.
    pub fn from_parts(weight: Array2<f64>, bias: Array1<f64>, activation: Activation, spectral: Option<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        check_dim(weight.nrows(), bias.len())?;
        let mut layer = Self {
            weight,
            bias,
            activation,
            spectral: None,
        };
        if let Some((u, v)) = spectral {
            layer.spectral = Some(SpectralNorm::from_parts(layer.weight.clone(), u, v)?);
            layer.refresh();
        }
        Ok(layer)
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    /// The weight used in the forward pass.
    pub fn weight(&self) -> &Array2<f64> {
        &self.weight
    }

    /// Replace the weight. With spectral norm enabled this sets the raw
    /// matrix, so the used weight becomes its normalized version.
    pub fn set_weight(&mut self, w: Array2<f64>) -> Result<()> {
        if w.dim() != self.weight.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.weight.len(),
                actual: w.len(),
            });
        }
        match &mut self.spectral {
            Some(sn) => {
                *sn.raw_mut() = w;
                self.refresh();
            }
            None => self.weight = w,
        }
        Ok(())
    }

    /// Trainable weight: the raw matrix under spectral norm, else the weight itself.
    pub fn trainable_weight(&self) -> &Array2<f64> {
        match &self.spectral {
            Some(sn) => sn.raw(),
            None => &self.weight,
        }
    }

    fn trainable_weight_mut(&mut self) -> &mut Array2<f64> {
        match &mut self.spectral {
            Some(sn) => sn.raw_mut(),
            None => &mut self.weight,
        }
    }

    pub fn spectral(&self) -> Option<&SpectralNorm> {
        self.spectral.as_ref()
    }

    pub fn enable_spectral_norm(&mut self, rng: &mut impl Rng) {
        self.spectral = Some(SpectralNorm::new(self.weight.clone(), rng));
        self.refresh();
    }

    /// Recompute the used weight from the raw matrix and current vectors.
    fn refresh(&mut self) {
        if let Some(sn) = &self.spectral {
            self.weight = sn.effective();
        }
    }

    /// One power-iteration step, then rederive the used weight. Returns the
    /// norm estimate, or `None` without spectral state or for a zero weight.
    pub fn spectral_normalize(&mut self) -> Option<f64> {
        let sn = self.spectral.as_mut()?;
        if !sn.power_step() {
            return None;
        }
        let sigma = sn.sigma();
        self.refresh();
        Some(sigma)
    }

    fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        self.activation.apply(&mut z);
        z
    }
}

/// Gradient with respect to one layer's trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Activations recorded by [`Mlp::forward_with_tape`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `activations[0]` is the input, `activations[i + 1]` the output of layer `i`.
    activations: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("tape holds the input")
    }
}

/// Fixed-topology multilayer perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    /// `widths` lists input width, hidden widths, and output width.
    pub fn new(widths: &[usize], hidden: Activation, output: Activation, init: Init, rng: &mut impl Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer widths {widths:?}")));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                Layer::new(widths[i], widths[i + 1], act, init, rng)
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            check_dim(pair[0].outputs(), pair[1].inputs())?;
        }
        for l in &layers {
            check_dim(l.outputs(), l.bias.len())?;
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::outputs))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let x = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Batched forward pass; rows are samples.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.input_dim(), x.ncols())?;
        let mut h = self.layers[0].forward(&x);
        for layer in &self.layers[1..] {
            h = layer.forward(&h.view());
        }
        Ok(h)
    }

    pub fn forward_with_tape(&self, x: Array2<f64>) -> Result<Tape> {
        check_dim(self.input_dim(), x.ncols())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x);
        for layer in &self.layers {
            let next = layer.forward(&activations.last().expect("non-empty").view());
            activations.push(next);
        }
        Ok(Tape { activations })
    }

    /// Reverse-mode pass for `⟨upstream, output⟩`: parameter gradients and the
    /// gradient with respect to the input rows.
    pub fn backward_tape(&self, tape: &Tape, upstream: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        let out = tape.output();
        if out.dim() != upstream.dim() {
            return Err(Error::DimensionMismatch {
                expected: out.len(),
                actual: upstream.len(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = upstream.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let output = &tape.activations[i + 1];
            if layer.activation != Activation::Identity {
                g.zip_mut_with(output, |gv, &o| *gv *= layer.activation.grad_from_output(o));
            }
            let input = &tape.activations[i];
            let mut weight = g.t().dot(input);
            if let Some(sn) = &layer.spectral {
                weight = sn.raw_gradient(&weight, &layer.weight);
            }
            if !weight.is_standard_layout() {
                weight = weight.as_standard_layout().into_owned();
            }
            let bias = g.sum_axis(Axis(0));
            g = g.dot(&layer.weight);
            grads.push(LayerGrad { weight, bias });
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, g))
    }

    /// Single-sample backward pass.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        check_dim(self.input_dim(), x.len())?;
        check_dim(self.output_dim(), upstream.len())?;
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        let tape = self.forward_with_tape(x)?;
        let up = ArrayView2::from_shape((1, upstream.len()), upstream).expect("row vector");
        let (grads, gx) = self.backward_tape(&tape, up)?;
        Ok((grads, gx.into_raw_vec_and_offset().0))
    }

    /// Trainable parameters as mutable slices: weight then bias for each
    /// layer. Call [`refresh`](Self::refresh) after writing through them.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            let Layer { weight, bias, spectral, .. } = l;
            let w = match spectral {
                Some(sn) => sn.raw_mut(),
                None => weight,
            };
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// Rederive spectrally normalized weights after their raw matrices changed.
    pub fn refresh(&mut self) {
        for l in &mut self.layers {
            l.refresh();
        }
    }

    /// Flattened trainable parameters, row-major weights followed by bias, layer by layer.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.trainable_weight().iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        check_dim(self.num_params(), params.len())?;
        let mut offset = 0;
        for slice in self.param_slices_mut() {
            let n = slice.len();
            slice.copy_from_slice(&params[offset..offset + n]);
            offset += n;
        }
        self.refresh();
        Ok(())
    }

    /// Apply one spectral-normalization step to every flagged layer.
    pub fn spectral_normalize(&mut self) {
        for l in &mut self.layers {
            l.spectral_normalize();
        }
    }

    /// `self ← retain·self + (1 − retain)·online`.
    pub fn polyak_from(&mut self, online: &Mlp, retain: f64) -> Result<()> {
        check_dim(self.num_params(), online.num_params())?;
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            t.trainable_weight_mut()
                .zip_mut_with(o.trainable_weight(), |a, &b| *a = retain * *a + (1.0 - retain) * b);
            t.bias.zip_mut_with(&o.bias, |a, &b| *a = retain * *a + (1.0 - retain) * b);
            t.refresh();
        }
        Ok(())
    }
}

/// Matrix with orthonormal rows or columns (whichever is shorter), from
/// Gram–Schmidt on a Gaussian sample.
fn orthogonal(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let (long, short) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let mut q: Array2<f64> = Array2::from_shape_simple_fn((long, short), || StandardNormal.sample(rng));
    for j in 0..short {
        for k in 0..j {
            let proj = q.column(j).dot(&q.column(k));
            let qk = q.column(k).to_owned();
            q.column_mut(j).scaled_add(-proj, &qk);
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    if rows >= cols {
        q
    } else {
        q.reversed_axes().as_standard_layout().to_owned()
    }
}
