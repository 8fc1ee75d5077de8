//! Small dense networks with hand-written reverse mode, Adam, input
//! standardization, and spectral-norm weight control.

mod adam;
mod mlp;
mod normalizer;
mod spectral;

use ndarray::{Array1, Array2};

use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};
pub use mlp::{Activation, Gradients, Init, Layer, LayerGrad, Mlp, Tape};
pub use normalizer::Normalizer;
pub use spectral::SpectralNorm;

use crate::error::{check_dim, Error, Result};

/// Portable description of an [`Mlp`]: widths, per-layer activation, the
/// spectral-norm singular-vector estimates of each normalized layer, and all
/// trainable parameters flattened (row-major weight, then bias, layer by layer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRecord {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub spectral: Vec<Option<SpectralRecord>>,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralRecord {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl From<&Mlp> for MlpRecord {
    fn from(net: &Mlp) -> Self {
        Self {
            widths: net.widths(),
            activations: net.layers().iter().map(|l| l.activation).collect(),
            spectral: net
                .layers()
                .iter()
                .map(|l| {
                    l.spectral().map(|sn| SpectralRecord {
                        u: sn.u().to_vec(),
                        v: sn.v().to_vec(),
                    })
                })
                .collect(),
            params: net.params_flat(),
        }
    }
}

impl TryFrom<&MlpRecord> for Mlp {
    type Error = Error;

    fn try_from(rec: &MlpRecord) -> Result<Self> {
        let n = rec.widths.len().saturating_sub(1);
        if n == 0 {
            return Err(Error::InvalidArgument("record has no layers".into()));
        }
        check_dim(n, rec.activations.len())?;
        check_dim(n, rec.spectral.len())?;
        let mut layers = Vec::with_capacity(n);
        let mut offset = 0;
        for i in 0..n {
            let (inp, out) = (rec.widths[i], rec.widths[i + 1]);
            let wlen = inp * out;
            if offset + wlen + out > rec.params.len() {
                return Err(Error::DimensionMismatch {
                    expected: offset + wlen + out,
                    actual: rec.params.len(),
                });
            }
            let weight = Array2::from_shape_vec((out, inp), rec.params[offset..offset + wlen].to_vec())
                .expect("length checked");
            offset += wlen;
            let bias = Array1::from(rec.params[offset..offset + out].to_vec());
            offset += out;
            let spectral = rec.spectral[i].as_ref().map(|sr| (sr.u.clone(), sr.v.clone()));
            layers.push(Layer::from_parts(weight, bias, rec.activations[i], spectral)?);
        }
        check_dim(offset, rec.params.len())?;
        Mlp::from_layers(layers)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn record_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = Mlp::new(&[3, 7, 5, 2], Activation::Relu, Activation::Identity, Init::Orthogonal, &mut rng).unwrap();
        net.layers_mut()[1].enable_spectral_norm(&mut rng);
        let json = serde_json::to_string(&MlpRecord::from(&net)).unwrap();
        let back: MlpRecord = serde_json::from_str(&json).unwrap();
        let restored = Mlp::try_from(&back).unwrap();
        assert_eq!(restored, net);
        let x = [0.1, -0.7, 3.3];
        let a = net.forward(&x).unwrap();
        let b = restored.forward(&x).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn truncated_record_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[2, 3, 1], Activation::Tanh, Activation::Identity, Init::XavierUniform, &mut rng).unwrap();
        let mut rec = MlpRecord::from(&net);
        rec.params.pop();
        assert!(Mlp::try_from(&rec).is_err());
    }
}
