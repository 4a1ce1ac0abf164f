use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::codec::{self, ByteReader};
use crate::dataset::upper_tri_len;
use crate::error::{Error, Result};
use crate::models::checkpoint::{self as ckpt, KIND_AUTOENCODER};
use crate::nn::{Activation, LayerParams, LayerSpec, Network, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_AE_HIDDEN: usize = 512;
pub const DEFAULT_LATENT: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl AutoencoderSpec {
    /// Default widths for `n` ROIs (`d = n(n-1)/2`).
    pub fn for_rois(n: usize) -> Self {
        Self {
            input_dim: upper_tri_len(n),
            hidden_dim: DEFAULT_AE_HIDDEN,
            latent_dim: DEFAULT_LATENT,
            activation: Activation::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.latent_dim == 0 {
            return Err(Error::Config(format!("autoencoder dims must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Fails unless the input width is the upper-triangle length for `n`.
    pub fn validate_for_rois(&self, n: usize) -> Result<()> {
        self.validate()?;
        let d = upper_tri_len(n);
        if self.input_dim != d {
            return Err(Error::Config(format!(
                "autoencoder input dim {} does not match n = {n} (needs d = {d})",
                self.input_dim
            )));
        }
        Ok(())
    }

    pub fn encoder_layers(&self) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Linear {
                in_dim: self.input_dim,
                out_dim: self.hidden_dim,
            },
            LayerSpec::Activation(self.activation),
            LayerSpec::Linear {
                in_dim: self.hidden_dim,
                out_dim: self.latent_dim,
            },
        ]
    }

    pub fn decoder_layers(&self) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Linear {
                in_dim: self.latent_dim,
                out_dim: self.hidden_dim,
            },
            LayerSpec::Activation(self.activation),
            LayerSpec::Linear {
                in_dim: self.hidden_dim,
                out_dim: self.input_dim,
            },
        ]
    }
}

/// Encoder/decoder pair; `forward` returns (reconstruction S, latent T).
#[derive(Clone, Debug)]
pub struct Autoencoder<T> {
    spec: AutoencoderSpec,
    encoder: Network<T>,
    decoder: Network<T>,
}

impl<T: Scalar> Autoencoder<T> {
    pub fn new(spec: AutoencoderSpec, rng: &mut dyn RngCore) -> Result<Self> {
        spec.validate()?;
        let encoder = Network::new(&spec.encoder_layers(), rng)?;
        let decoder = Network::new(&spec.decoder_layers(), rng)?;
        Ok(Self {
            spec,
            encoder,
            decoder,
        })
    }

    pub fn from_snapshot(spec: AutoencoderSpec, params: &ParamSet<T>) -> Result<Self> {
        // Initial values are overwritten immediately.
        let mut ae = Self::new(spec, &mut crate::seed::rng_for(0, &[]))?;
        ae.load_snapshot(params)?;
        Ok(ae)
    }

    pub fn spec(&self) -> &AutoencoderSpec {
        &self.spec
    }

    pub fn encoder(&self) -> &Network<T> {
        &self.encoder
    }

    pub fn decoder(&self) -> &Network<T> {
        &self.decoder
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.rank() != 1 || x.len() != self.spec.input_dim {
            return Err(Error::dim(format!(
                "autoencoder expects a vector of length {}, got shape {:?}",
                self.spec.input_dim,
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn encode(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        self.encoder.predict(x)
    }

    /// `(S, T)`: reconstruction and latent code.
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let t = self.encode(x)?;
        let s = self.decoder.predict(&t)?;
        Ok((s, t))
    }

    /// Forward pass that caches intermediates for [`Self::backward`].
    pub(crate) fn forward_cached(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        self.check_input(x)?;
        let t = self.encoder.forward_eval(x)?;
        let s = self.decoder.forward_eval(&t)?;
        Ok((s, t))
    }

    /// Accumulates parameter gradients from `dL/dS`.
    pub(crate) fn backward(&mut self, grad_s: &Tensor<T>) -> Result<()> {
        let grad_t = self.decoder.backward(grad_s)?;
        self.encoder.backward(&grad_t)?;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.encoder.zero_grad();
        self.decoder.zero_grad();
    }

    pub fn clear_cache(&mut self) {
        self.encoder.clear_cache();
        self.decoder.clear_cache();
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut LayerParams<T>> {
        self.encoder.params_mut().chain(self.decoder.params_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder.parameter_count() + self.decoder.parameter_count()
    }

    /// Encoder tensors followed by decoder tensors.
    pub fn snapshot(&self) -> ParamSet<T> {
        let mut tensors = self.encoder.snapshot().into_tensors();
        tensors.extend(self.decoder.snapshot().into_tensors());
        ParamSet::new(tensors)
    }

    pub fn load_snapshot(&mut self, params: &ParamSet<T>) -> Result<()> {
        self.snapshot().require_structure(params, "loading autoencoder parameters")?;
        let k = 2 * self.encoder.params().count();
        let (enc, dec) = params.tensors().split_at(k);
        self.encoder.load_snapshot(&ParamSet::new(enc.to_vec()))?;
        self.decoder.load_snapshot(&ParamSet::new(dec.to_vec()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        ckpt::put_header(&mut out, KIND_AUTOENCODER);
        codec::put_len(&mut out, self.spec.input_dim)?;
        codec::put_len(&mut out, self.spec.hidden_dim)?;
        codec::put_len(&mut out, self.spec.latent_dim)?;
        ckpt::put_activation(&mut out, self.spec.activation);
        self.encoder.encode(&mut out)?;
        self.decoder.encode(&mut out)?;
        Ok(out)
    }

    pub fn decode_named(name: &str, bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(name, bytes);
        ckpt::read_header(&mut r, KIND_AUTOENCODER)?;
        let spec = AutoencoderSpec {
            input_dim: r.u32()? as usize,
            hidden_dim: r.u32()? as usize,
            latent_dim: r.u32()? as usize,
            activation: ckpt::read_activation(&mut r)?,
        };
        spec.validate().map_err(|e| r.error(e.to_string()))?;
        let encoder = Network::decode(&mut r)?;
        let decoder = Network::decode(&mut r)?;
        r.expect_end()?;
        if encoder.specs() != spec.encoder_layers() || decoder.specs() != spec.decoder_layers() {
            return Err(r.error(format!("layer stack does not match header {spec:?}")));
        }
        Ok(Self {
            spec,
            encoder,
            decoder,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::decode_named("autoencoder checkpoint", bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        ckpt::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode_named(&path.display().to_string(), &ckpt::read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;

    fn identity(k: usize) -> Tensor<f64> {
        let mut m = vec![0.0; k * k];
        for i in 0..k {
            m[i * k + i] = 1.0;
        }
        Tensor::matrix(k, k, m).unwrap()
    }

    #[test]
    fn identity_pipeline_reproduces_positive_input() {
        let spec = AutoencoderSpec {
            input_dim: 5,
            hidden_dim: 5,
            latent_dim: 5,
            activation: Activation::default(),
        };
        let eye = identity(5);
        let zero = Tensor::zeros(&[5]).unwrap();
        let params = ParamSet::new((0..4).flat_map(|_| [eye.clone(), zero.clone()]).collect());
        let ae = Autoencoder::from_snapshot(spec, &params).unwrap();
        let x = Tensor::vector(vec![0.5, 1.0, 2.0, 0.1, 3.0]);
        let (s, t) = ae.forward(&x).unwrap();
        assert_eq!(s, x);
        assert_eq!(t, x);
    }

    #[test]
    fn deterministic_forward() {
        let ae = Autoencoder::<f64>::new(AutoencoderSpec::for_rois(8), &mut rng_for(1, &[])).unwrap();
        let x = Tensor::vector((0..28).map(|i| (i as f64 * 0.37).sin()).collect());
        let a = ae.forward(&x).unwrap();
        let b = ae.forward(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.len(), DEFAULT_LATENT);
        assert_eq!(a.0.len(), 28);
    }

    #[test]
    fn input_width_follows_roi_count() {
        let spec = AutoencoderSpec::for_rois(116);
        assert_eq!(spec.input_dim, 6670);
        spec.validate_for_rois(116).unwrap();
        let wrong = AutoencoderSpec {
            input_dim: 6669,
            ..spec
        };
        assert!(matches!(wrong.validate_for_rois(116), Err(Error::Config(_))));
    }

    #[test]
    fn wrong_length_is_a_dimension_error() {
        let ae = Autoencoder::<f64>::new(AutoencoderSpec::for_rois(6), &mut rng_for(2, &[])).unwrap();
        assert!(matches!(
            ae.forward(&Tensor::vector(vec![0.0; 14])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let spec = AutoencoderSpec {
            hidden_dim: 7,
            latent_dim: 3,
            ..AutoencoderSpec::for_rois(5)
        };
        let ae = Autoencoder::<f64>::new(spec, &mut rng_for(3, &[])).unwrap();
        let bytes = ae.to_bytes().unwrap();
        assert_eq!(&bytes[..6], b"AAAMD\0");
        let back = Autoencoder::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back.snapshot(), ae.snapshot());
        assert_eq!(back.spec(), ae.spec());
        assert!(Autoencoder::<f64>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
