use std::path::Path;

use rand::RngCore;

use crate::codec::{self, ByteReader};
use crate::error::{Error, Result};
use crate::nn::layers::{Activation, Layer, LayerParams, LayerSpec};
use crate::nn::params::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"AAANN\0";
pub const CHECKPOINT_VERSION: u16 = 1;

/// A sequential stack of layers.
#[derive(Clone, Debug)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(specs: &[LayerSpec], rng: &mut dyn RngCore) -> Result<Self> {
        let layers = specs
            .iter()
            .map(|&s| Layer::new(s, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| *l.spec()).collect()
    }

    /// Inference without touching any cached state.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut cur = self.layers[0].apply(x)?;
        for layer in &self.layers[1..] {
            cur = layer.apply(&cur)?;
        }
        Ok(cur)
    }

    /// Training-mode forward pass (dropout active), caching for backward.
    pub fn forward_train(&mut self, x: &Tensor<T>, rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, Some(&mut *rng))?;
        }
        Ok(cur)
    }

    /// Inference-mode forward pass that still caches for backward.
    pub fn forward_eval(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, None)?;
        }
        Ok(cur)
    }

    /// Reverse pass from the output gradient; accumulates parameter
    /// gradients and returns the gradient with respect to the input.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut cur = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    pub fn clear_cache(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().for_each(LayerParams::zero_grad);
    }

    pub fn params(&self) -> impl Iterator<Item = &LayerParams<T>> {
        self.layers.iter().filter_map(Layer::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut LayerParams<T>> {
        self.layers.iter_mut().filter_map(Layer::params_mut)
    }

    pub fn parameter_count(&self) -> usize {
        self.params().map(|p| p.weights.len() + p.bias.len()).sum()
    }

    /// Weights and biases in layer order.
    pub fn snapshot(&self) -> ParamSet<T> {
        ParamSet::new(
            self.params()
                .flat_map(|p| p.tensors().map(Clone::clone))
                .collect(),
        )
    }

    pub fn load_snapshot(&mut self, params: &ParamSet<T>) -> Result<()> {
        self.snapshot().require_structure(params, "loading parameters")?;
        let mut it = params.tensors().iter();
        for p in self.params_mut() {
            p.weights = it.next().expect("checked length").clone();
            p.bias = it.next().expect("checked length").clone();
        }
        Ok(())
    }

    pub fn encode(&self, out: &mut Vec<u8>) -> Result<()> {
        out.extend_from_slice(CHECKPOINT_MAGIC);
        codec::put_u16(out, CHECKPOINT_VERSION);
        codec::put_len(out, self.layers.len())?;
        for layer in &self.layers {
            let (tag, ints) = encode_spec(layer.spec());
            codec::put_u8(out, tag);
            codec::put_len(out, ints.len())?;
            for v in ints {
                codec::put_u64(out, v);
            }
            match layer.params() {
                Some(p) => {
                    codec::put_u32(out, 2);
                    p.weights.encode(out);
                    p.bias.encode(out);
                }
                None => codec::put_u32(out, 0),
            }
        }
        Ok(())
    }

    pub(crate) fn decode(reader: &mut ByteReader<'_>) -> Result<Self> {
        reader.expect_magic(CHECKPOINT_MAGIC)?;
        let version = reader.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(reader.error(format!("unsupported checkpoint version {version}")));
        }
        let count = reader.u32()? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let at = reader.position();
            let tag = reader.u8()?;
            let n_ints = reader.u32()? as usize;
            let ints = (0..n_ints)
                .map(|_| reader.u64())
                .collect::<Result<Vec<_>>>()?;
            let spec = decode_spec(tag, &ints).map_err(|m| reader.error(format!("layer at {at}: {m}")))?;
            let n_tensors = reader.u32()?;
            let layer = match n_tensors {
                0 => Layer::without_params(spec),
                2 => {
                    let w = Tensor::decode(reader)?;
                    let b = Tensor::decode(reader)?;
                    Layer::with_params(spec, w, b)
                }
                other => return Err(reader.error(format!("layer carries {other} tensors"))),
            }
            .map_err(|e| reader.error(e.to_string()))?;
            if layer.params().is_some() != (n_tensors == 2) {
                return Err(reader.error(format!("parameter count mismatch for {spec:?}")));
            }
            layers.push(layer);
        }
        Self::from_layers(layers).map_err(|e| reader.error(e.to_string()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.encode(&mut out)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = ByteReader::new("network checkpoint", bytes);
        let net = Self::decode(&mut reader)?;
        reader.expect_end()?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut reader = ByteReader::new(path.display().to_string(), &bytes);
        let net = Self::decode(&mut reader)?;
        reader.expect_end()?;
        Ok(net)
    }
}

const TAG_ROW_CONV: u8 = 1;
const TAG_COL_CONV: u8 = 2;
const TAG_LINEAR: u8 = 3;
const TAG_INSTANCE_NORM: u8 = 4;
const TAG_ACTIVATION: u8 = 5;
const TAG_DROPOUT: u8 = 6;
const TAG_SOFTMAX: u8 = 7;

fn encode_spec(spec: &LayerSpec) -> (u8, Vec<u64>) {
    match *spec {
        LayerSpec::RowConv { n, channels } => (TAG_ROW_CONV, vec![n as u64, channels as u64]),
        LayerSpec::ColConv {
            in_channels,
            n,
            channels,
        } => (
            TAG_COL_CONV,
            vec![in_channels as u64, n as u64, channels as u64],
        ),
        LayerSpec::Linear { in_dim, out_dim } => (TAG_LINEAR, vec![in_dim as u64, out_dim as u64]),
        LayerSpec::InstanceNorm { channels, spatial } => {
            (TAG_INSTANCE_NORM, vec![channels as u64, spatial as u64])
        }
        LayerSpec::Activation(act) => {
            let ints = match act {
                Activation::LeakyRelu { slope } => vec![0, slope.to_bits()],
                Activation::Relu => vec![1],
                Activation::Tanh => vec![2],
            };
            (TAG_ACTIVATION, ints)
        }
        LayerSpec::Dropout { p } => (TAG_DROPOUT, vec![p.to_bits()]),
        LayerSpec::Softmax => (TAG_SOFTMAX, vec![]),
    }
}

fn decode_spec(tag: u8, ints: &[u64]) -> std::result::Result<LayerSpec, String> {
    let u = |i: usize| -> std::result::Result<usize, String> {
        ints.get(i)
            .map(|&v| v as usize)
            .ok_or_else(|| format!("tag {tag} missing field {i}"))
    };
    let spec = match (tag, ints.len()) {
        (TAG_ROW_CONV, 2) => LayerSpec::RowConv {
            n: u(0)?,
            channels: u(1)?,
        },
        (TAG_COL_CONV, 3) => LayerSpec::ColConv {
            in_channels: u(0)?,
            n: u(1)?,
            channels: u(2)?,
        },
        (TAG_LINEAR, 2) => LayerSpec::Linear {
            in_dim: u(0)?,
            out_dim: u(1)?,
        },
        (TAG_INSTANCE_NORM, 2) => LayerSpec::InstanceNorm {
            channels: u(0)?,
            spatial: u(1)?,
        },
        (TAG_ACTIVATION, _) => LayerSpec::Activation(match ints {
            [0, bits] => Activation::LeakyRelu {
                slope: f64::from_bits(*bits),
            },
            [1] => Activation::Relu,
            [2] => Activation::Tanh,
            _ => return Err(format!("bad activation fields {ints:?}")),
        }),
        (TAG_DROPOUT, 1) => LayerSpec::Dropout {
            p: f64::from_bits(ints[0]),
        },
        (TAG_SOFTMAX, 0) => LayerSpec::Softmax,
        _ => return Err(format!("unknown layer tag {tag} with {} fields", ints.len())),
    };
    Ok(spec)
}
