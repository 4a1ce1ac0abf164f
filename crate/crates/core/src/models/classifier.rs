use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::codec::{self, ByteReader};
use crate::error::{Error, Result};
use crate::models::checkpoint::{self as ckpt, KIND_CLASSIFIER};
use crate::nn::{softmax, Activation, LayerParams, LayerSpec, Network, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_CLASSIFIER_HIDDEN: usize = 96;
pub const DEFAULT_DROPOUT: f64 = 0.5;
pub const NUM_CLASSES: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassifierVariant {
    #[serde(rename = "CNN-1")]
    Cnn1,
    #[serde(rename = "CNN-2")]
    Cnn2,
    #[serde(rename = "CNN-3")]
    Cnn3,
    #[serde(rename = "CNN-4")]
    Cnn4,
}

impl ClassifierVariant {
    pub const ALL: [ClassifierVariant; 4] = [Self::Cnn1, Self::Cnn2, Self::Cnn3, Self::Cnn4];

    /// Full-scale `(c1, c2)` channel counts.
    pub fn channels(self) -> (usize, usize) {
        match self {
            Self::Cnn1 => (1024, 2000),
            Self::Cnn2 => (512, 2000),
            Self::Cnn3 => (1000, 2000),
            Self::Cnn4 => (1024, 2048),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Self::Cnn1 => 1,
            Self::Cnn2 => 2,
            Self::Cnn3 => 3,
            Self::Cnn4 => 4,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(usize::from(i).checked_sub(1)?).copied()
    }
}

impl fmt::Display for ClassifierVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CNN-{}", self.index())
    }
}

impl FromStr for ClassifierVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        digits
            .strip_prefix("cnn")
            .and_then(|d| d.parse::<u8>().ok())
            .and_then(Self::from_index)
            .ok_or_else(|| Error::Config(format!("unknown classifier variant {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub variant: ClassifierVariant,
    pub n: usize,
    pub c1: usize,
    pub c2: usize,
    pub hidden: usize,
    pub dropout_p: f64,
    #[serde(default)]
    pub activation: Activation,
}

fn shrink(v: usize, scale: usize) -> usize {
    (v / scale).max(2)
}

impl ClassifierSpec {
    pub fn full_scale(variant: ClassifierVariant, n: usize) -> Self {
        let (c1, c2) = variant.channels();
        Self {
            variant,
            n,
            c1,
            c2,
            hidden: DEFAULT_CLASSIFIER_HIDDEN,
            dropout_p: DEFAULT_DROPOUT,
            activation: Activation::default(),
        }
    }

    /// Channel and hidden widths divided by `scale` (floor, at least 2).
    pub fn desk_scale(variant: ClassifierVariant, n: usize, scale: usize) -> Result<Self> {
        if scale == 0 {
            return Err(Error::Config("channel scale must be at least 1".into()));
        }
        let full = Self::full_scale(variant, n);
        Ok(Self {
            c1: shrink(full.c1, scale),
            c2: shrink(full.c2, scale),
            hidden: shrink(full.hidden, scale),
            ..full
        })
    }

    /// One spec per variant, in order; fails if the scale collapses two of them.
    pub fn heterogeneous_set(n: usize, scale: usize) -> Result<Vec<Self>> {
        let specs = ClassifierVariant::ALL
            .iter()
            .map(|&v| Self::desk_scale(v, n, scale))
            .collect::<Result<Vec<_>>>()?;
        for (i, a) in specs.iter().enumerate() {
            for b in &specs[i + 1..] {
                if (a.c1, a.c2) == (b.c1, b.c2) {
                    return Err(Error::Config(format!(
                        "scale {scale} makes {} and {} identical ({}, {})",
                        a.variant, b.variant, a.c1, a.c2
                    )));
                }
            }
        }
        Ok(specs)
    }

    pub fn validate(&self) -> Result<()> {
        self.layers().iter().try_for_each(LayerSpec::validate)
    }

    /// Same layer stack (and therefore same parameter shapes).
    pub fn same_architecture(&self, other: &Self) -> bool {
        self.layers() == other.layers()
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let act = LayerSpec::Activation(self.activation);
        vec![
            LayerSpec::RowConv {
                n: self.n,
                channels: self.c1,
            },
            LayerSpec::InstanceNorm {
                channels: self.c1,
                spatial: self.n,
            },
            act,
            LayerSpec::ColConv {
                in_channels: self.c1,
                n: self.n,
                channels: self.c2,
            },
            act,
            LayerSpec::Linear {
                in_dim: self.c2,
                out_dim: self.hidden,
            },
            act,
            LayerSpec::Dropout { p: self.dropout_p },
            LayerSpec::Linear {
                in_dim: self.hidden,
                out_dim: NUM_CLASSES,
            },
        ]
    }
}

/// Argmax of a logit pair; ties go to label 0.
pub fn predicted_label<T: Scalar>(logits: &Tensor<T>) -> u8 {
    let l = logits.data();
    u8::from(l[1] > l[0])
}

/// CNN over an `n × n` FC matrix that emits two raw logits.
#[derive(Clone, Debug)]
pub struct Classifier<T> {
    spec: ClassifierSpec,
    net: Network<T>,
}

impl<T: Scalar> Classifier<T> {
    pub fn new(spec: ClassifierSpec, rng: &mut dyn RngCore) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            net: Network::new(&spec.layers(), rng)?,
        })
    }

    pub fn from_snapshot(spec: ClassifierSpec, params: &ParamSet<T>) -> Result<Self> {
        // Initial values are overwritten immediately.
        let mut c = Self::new(spec, &mut crate::seed::rng_for(0, &[]))?;
        c.net.load_snapshot(params)?;
        Ok(c)
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn network(&self) -> &Network<T> {
        &self.net
    }

    fn expand(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.spec.n;
        if x.shape() != [n, n] {
            return Err(Error::dim(format!(
                "{} expects a {n}x{n} matrix, got {:?}",
                self.spec.variant,
                x.shape()
            )));
        }
        x.clone().reshape(vec![1, n, n])
    }

    /// Inference-mode logits.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.net.predict(&self.expand(x)?)
    }

    pub fn probabilities(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        softmax(&self.predict(x)?)
    }

    pub fn predict_label(&self, x: &Tensor<T>) -> Result<u8> {
        self.predict(x).map(|l| predicted_label(&l))
    }

    /// Logits with caching for backward; `rng` is `Some` in training mode.
    pub fn forward(&mut self, x: &Tensor<T>, rng: Option<&mut dyn RngCore>) -> Result<Tensor<T>> {
        let x3 = self.expand(x)?;
        match rng {
            Some(r) => self.net.forward_train(&x3, r),
            None => self.net.forward_eval(&x3),
        }
    }

    pub(crate) fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<()> {
        self.net.backward(grad_logits).map(|_| ())
    }

    pub fn zero_grad(&mut self) {
        self.net.zero_grad();
    }

    pub fn clear_cache(&mut self) {
        self.net.clear_cache();
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut LayerParams<T>> {
        self.net.params_mut()
    }

    pub fn parameter_count(&self) -> usize {
        self.net.parameter_count()
    }

    pub fn snapshot(&self) -> ParamSet<T> {
        self.net.snapshot()
    }

    pub fn load_snapshot(&mut self, params: &ParamSet<T>) -> Result<()> {
        self.net.load_snapshot(params)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let s = &self.spec;
        let mut out = Vec::new();
        ckpt::put_header(&mut out, KIND_CLASSIFIER);
        codec::put_u8(&mut out, s.variant.index());
        for v in [s.n, s.c1, s.c2, s.hidden] {
            codec::put_len(&mut out, v)?;
        }
        codec::put_f64(&mut out, s.dropout_p);
        ckpt::put_activation(&mut out, s.activation);
        self.net.encode(&mut out)?;
        Ok(out)
    }

    pub fn decode_named(name: &str, bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(name, bytes);
        ckpt::read_header(&mut r, KIND_CLASSIFIER)?;
        let tag = r.u8()?;
        let variant = ClassifierVariant::from_index(tag)
            .ok_or_else(|| r.error(format!("unknown classifier variant {tag}")))?;
        let spec = ClassifierSpec {
            variant,
            n: r.u32()? as usize,
            c1: r.u32()? as usize,
            c2: r.u32()? as usize,
            hidden: r.u32()? as usize,
            dropout_p: r.f64()?,
            activation: ckpt::read_activation(&mut r)?,
        };
        spec.validate().map_err(|e| r.error(e.to_string()))?;
        let net = Network::decode(&mut r)?;
        r.expect_end()?;
        if net.specs() != spec.layers() {
            return Err(r.error(format!("layer stack does not match header {spec:?}")));
        }
        Ok(Self { spec, net })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::decode_named("classifier checkpoint", bytes)
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
    use crate::nn::tests::check_network_gradients;
    use crate::seed::rng_for;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn full_scale_matches_the_published_table() {
        let got: Vec<(usize, usize, usize)> = ClassifierVariant::ALL
            .iter()
            .map(|&v| {
                let s = ClassifierSpec::full_scale(v, 116);
                (s.c1, s.c2, s.hidden)
            })
            .collect();
        assert_eq!(
            got,
            [(1024, 2000, 96), (512, 2000, 96), (1000, 2000, 96), (1024, 2048, 96)]
        );
        for v in ClassifierVariant::ALL {
            let s = ClassifierSpec::full_scale(v, 116);
            assert_eq!(s.dropout_p, 0.5);
            assert_eq!(
                s.layers().last(),
                Some(&LayerSpec::Linear {
                    in_dim: 96,
                    out_dim: 2
                })
            );
        }
    }

    #[test]
    fn desk_scale_sixteen() {
        let specs = ClassifierSpec::heterogeneous_set(32, 16).unwrap();
        let got: Vec<_> = specs.iter().map(|s| (s.c1, s.c2, s.hidden)).collect();
        assert_eq!(got, [(64, 125, 6), (32, 125, 6), (62, 125, 6), (64, 128, 6)]);
        assert!(ClassifierSpec::desk_scale(ClassifierVariant::Cnn1, 32, 0).is_err());
        // CNN-1 and CNN-3 both shrink to (40, 80)
        assert!(ClassifierSpec::heterogeneous_set(32, 25).is_err());
    }

    proptest! {
        #[test]
        fn moderate_scales_keep_variants_distinct(scale in 1usize..=24) {
            prop_assert!(ClassifierSpec::heterogeneous_set(32, scale).is_ok());
        }
    }

    #[test]
    fn variant_names() {
        assert_eq!(ClassifierVariant::Cnn3.to_string(), "CNN-3");
        assert_eq!("cnn-4".parse::<ClassifierVariant>().unwrap(), ClassifierVariant::Cnn4);
        assert_eq!("CNN2".parse::<ClassifierVariant>().unwrap(), ClassifierVariant::Cnn2);
        assert!("CNN-5".parse::<ClassifierVariant>().is_err());
        assert_eq!(
            serde_json::to_string(&ClassifierVariant::Cnn1).unwrap(),
            "\"CNN-1\""
        );
    }

    fn tiny_spec() -> ClassifierSpec {
        ClassifierSpec {
            variant: ClassifierVariant::Cnn1,
            n: 4,
            c1: 2,
            c2: 3,
            hidden: 5,
            dropout_p: 0.5,
            activation: Activation::default(),
        }
    }

    fn random_matrix(n: usize, seed: u64) -> Tensor<f64> {
        let mut r = rng_for(seed, &[]);
        let mut m = vec![1.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = r.random_range(-0.9..0.9);
                m[i * n + j] = v;
                m[j * n + i] = v;
            }
        }
        Tensor::matrix(n, n, m).unwrap()
    }

    #[test]
    fn hand_unrolled_forward() {
        let spec = tiny_spec();
        let mut clf = Classifier::<f64>::new(spec, &mut rng_for(5, &[])).unwrap();
        // Non-zero biases so every term of the pipeline is exercised.
        let mut r = rng_for(6, &[]);
        for p in clf.params_mut() {
            for b in p.bias.data_mut() {
                *b = r.random_range(-0.5..0.5);
            }
        }
        let x = random_matrix(4, 7);
        let logits = clf.predict(&x).unwrap();

        let p = clf.snapshot();
        let t = p.tensors();
        let (w1, b1, w2, b2) = (t[0].data(), t[1].data(), t[2].data(), t[3].data());
        let (wh, bh, wo, bo) = (t[4].data(), t[5].data(), t[6].data(), t[7].data());
        let phi = |v: f64| if v > 0.0 { v } else { 0.01 * v };
        let xs = x.data();

        let mut z1 = [[0.0f64; 4]; 2];
        for k in 0..2 {
            for r in 0..4 {
                let mut acc = b1[k];
                for c in 0..4 {
                    acc += w1[k * 4 + c] * xs[r * 4 + c];
                }
                z1[k][r] = acc;
            }
            let mean = z1[k].iter().sum::<f64>() / 4.0;
            let var = z1[k].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            for r in 0..4 {
                z1[k][r] = phi((z1[k][r] - mean) / (var + 1e-5).sqrt());
            }
        }
        let mut z2 = [0.0f64; 3];
        for (o, out) in z2.iter_mut().enumerate() {
            let mut acc = b2[o];
            for k in 0..2 {
                for r in 0..4 {
                    acc += w2[(o * 2 + k) * 4 + r] * z1[k][r];
                }
            }
            *out = phi(acc);
        }
        let mut h = [0.0f64; 5];
        for (j, out) in h.iter_mut().enumerate() {
            let mut acc = bh[j];
            for (i, z) in z2.iter().enumerate() {
                acc += wh[j * 3 + i] * z;
            }
            *out = phi(acc);
        }
        for c in 0..2 {
            let mut acc = bo[c];
            for (j, hv) in h.iter().enumerate() {
                acc += wo[c * 5 + j] * hv;
            }
            assert!((logits.data()[c] - acc).abs() < 1e-12, "logit {c}: {} vs {acc}", logits.data()[c]);
        }
    }

    #[test]
    fn dead_network_gives_even_odds() {
        let spec = tiny_spec();
        let clf = Classifier::<f64>::new(spec, &mut rng_for(1, &[])).unwrap();
        let zeros = ParamSet::new(
            clf.snapshot()
                .tensors()
                .iter()
                .map(Tensor::zeros_like)
                .collect(),
        );
        let dead = Classifier::from_snapshot(spec, &zeros).unwrap();
        let x = random_matrix(4, 2);
        assert_eq!(dead.predict(&x).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(dead.probabilities(&x).unwrap().data(), &[0.5, 0.5]);
        assert_eq!(dead.predict_label(&x).unwrap(), 0);
    }

    #[test]
    fn inference_is_repeatable_and_two_wide() {
        let spec = ClassifierSpec::desk_scale(ClassifierVariant::Cnn2, 8, 32).unwrap();
        let clf = Classifier::<f64>::new(spec, &mut rng_for(2, &[])).unwrap();
        let x = random_matrix(8, 3);
        let a = clf.predict(&x).unwrap();
        assert_eq!(a, clf.predict(&x).unwrap());
        assert_eq!(a.len(), 2);
        assert!(a.all_finite());
    }

    #[test]
    fn rejects_wrong_matrix_size() {
        let clf = Classifier::<f64>::new(tiny_spec(), &mut rng_for(2, &[])).unwrap();
        assert!(matches!(clf.predict(&random_matrix(5, 1)), Err(Error::Dimension(_))));
    }

    #[test]
    fn cnn1_gradients_at_n8() {
        let spec = ClassifierSpec::desk_scale(ClassifierVariant::Cnn1, 8, 32).unwrap();
        let clf = Classifier::<f64>::new(spec, &mut rng_for(9, &[])).unwrap();
        let x = random_matrix(8, 10).reshape(vec![1, 8, 8]).unwrap();
        check_network_gradients(clf.network(), &x, Some(4), 11, 1e-4);
    }

    #[test]
    fn checkpoint_round_trip_and_kind_check() {
        let spec = ClassifierSpec::desk_scale(ClassifierVariant::Cnn3, 6, 64).unwrap();
        let clf = Classifier::<f64>::new(spec, &mut rng_for(3, &[])).unwrap();
        let bytes = clf.to_bytes().unwrap();
        let back = Classifier::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back.spec(), clf.spec());
        assert_eq!(back.snapshot(), clf.snapshot());
        assert!(crate::models::Autoencoder::<f64>::from_bytes(&bytes).is_err());
    }
}
