//! The seven layer kinds, each with a cached forward pass and an exact
//! reverse-mode backward pass.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{dot_slices, Tensor};

/// Variance floor used by instance normalization.
pub const INSTANCE_NORM_EPS: f64 = 1e-5;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Relu,
    Tanh,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::LeakyRelu { slope } => {
                if x > T::zero() {
                    x
                } else {
                    x * T::lit(slope)
                }
            }
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
        }
    }

    #[inline]
    fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::LeakyRelu { slope } => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::lit(slope)
                }
            }
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
        }
    }
}

/// Structural description of one layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerSpec {
    /// `channels` kernels of spatial shape `(1, n)` over a `[1, n, n]` input,
    /// producing `[channels, n, 1]`.
    RowConv { n: usize, channels: usize },
    /// `channels` kernels of shape `[in_channels, n, 1]` over a
    /// `[in_channels, n, 1]` input, producing `[channels, 1, 1]`.
    ColConv {
        in_channels: usize,
        n: usize,
        channels: usize,
    },
    /// Dense map; accepts any input holding `in_dim` entries and emits a vector.
    Linear { in_dim: usize, out_dim: usize },
    /// Per-channel standardization over `spatial` = h·w positions, no affine.
    InstanceNorm { channels: usize, spatial: usize },
    Activation(Activation),
    Dropout { p: f64 },
    Softmax,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::Config(format!("{name} must be positive in {self:?}")))
            } else {
                Ok(())
            }
        };
        match *self {
            LayerSpec::RowConv { n, channels } => {
                positive("n", n)?;
                positive("channels", channels)
            }
            LayerSpec::ColConv {
                in_channels,
                n,
                channels,
            } => {
                positive("in_channels", in_channels)?;
                positive("n", n)?;
                positive("channels", channels)
            }
            LayerSpec::Linear { in_dim, out_dim } => {
                positive("in_dim", in_dim)?;
                positive("out_dim", out_dim)
            }
            LayerSpec::InstanceNorm { channels, spatial } => {
                positive("channels", channels)?;
                if spatial < 2 {
                    return Err(Error::Config(format!(
                        "instance norm needs at least 2 spatial positions per channel, got {spatial}"
                    )));
                }
                Ok(())
            }
            LayerSpec::Activation(Activation::LeakyRelu { slope }) if !slope.is_finite() => {
                Err(Error::Config(format!("non-finite leaky slope {slope}")))
            }
            LayerSpec::Dropout { p } => {
                if (0.0..1.0).contains(&p) {
                    Ok(())
                } else {
                    Err(Error::Config(format!("dropout probability {p} outside [0, 1)")))
                }
            }
            _ => Ok(()),
        }
    }

    /// (weight shape, bias length, fan-in) for parameterized kinds.
    fn param_shape(&self) -> Option<(Vec<usize>, usize, usize)> {
        match *self {
            LayerSpec::RowConv { n, channels } => Some((vec![channels, n], channels, n)),
            LayerSpec::ColConv {
                in_channels,
                n,
                channels,
            } => Some((vec![channels, in_channels, n], channels, in_channels * n)),
            LayerSpec::Linear { in_dim, out_dim } => Some((vec![out_dim, in_dim], out_dim, in_dim)),
            _ => None,
        }
    }
}

/// Weights and bias of a parameterized layer, with same-shaped gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub grad_weights: Tensor<T>,
    pub grad_bias: Tensor<T>,
}

impl<T: Scalar> LayerParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Self {
        Self {
            grad_weights: Tensor::zeros_like(&weights),
            grad_bias: Tensor::zeros_like(&bias),
            weights,
            bias,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad_weights.fill(T::zero());
        self.grad_bias.fill(T::zero());
    }

    pub fn tensors(&self) -> [&Tensor<T>; 2] {
        [&self.weights, &self.bias]
    }

    /// (parameter, gradient) pairs in a fixed order.
    pub fn pairs_mut(&mut self) -> [(&mut Tensor<T>, &Tensor<T>); 2] {
        [
            (&mut self.weights, &self.grad_weights),
            (&mut self.bias, &self.grad_bias),
        ]
    }

    pub fn grads_mut(&mut self) -> [&mut Tensor<T>; 2] {
        [&mut self.grad_weights, &mut self.grad_bias]
    }
}

#[derive(Clone, Debug, Default)]
enum Cache<T> {
    #[default]
    Empty,
    Input(Tensor<T>),
    Output(Tensor<T>),
    Norm { xhat: Tensor<T>, inv_std: Vec<T> },
    Mask(Option<Vec<T>>),
}

#[derive(Clone, Debug)]
pub struct Layer<T> {
    spec: LayerSpec,
    params: Option<LayerParams<T>>,
    cache: Cache<T>,
}

fn expect_shape<T: Scalar>(x: &Tensor<T>, shape: &[usize], spec: &LayerSpec) -> Result<()> {
    if x.shape() != shape {
        return Err(Error::dim(format!(
            "{spec:?} expects input shape {shape:?}, got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

impl<T: Scalar> Layer<T> {
    /// Builds a layer; weights use Kaiming-uniform fan-in scaling, biases start at zero.
    pub fn new(spec: LayerSpec, rng: &mut dyn RngCore) -> Result<Self> {
        spec.validate()?;
        let params = spec.param_shape().map(|(wshape, blen, fan_in)| {
            let bound = (6.0 / fan_in as f64).sqrt();
            let count: usize = wshape.iter().product();
            let w = (0..count)
                .map(|_| T::lit(rng.random_range(-bound..bound)))
                .collect();
            LayerParams::new(
                Tensor::new(wshape, w).expect("validated shape"),
                Tensor::zeros(&[blen]).expect("positive bias length"),
            )
        });
        Ok(Self {
            spec,
            params,
            cache: Cache::Empty,
        })
    }

    /// Builds a layer kind that carries no parameters.
    pub fn without_params(spec: LayerSpec) -> Result<Self> {
        spec.validate()?;
        if spec.param_shape().is_some() {
            return Err(Error::Config(format!("{spec:?} requires parameters")));
        }
        Ok(Self {
            spec,
            params: None,
            cache: Cache::Empty,
        })
    }

    /// Builds a parameterized layer from explicit weights and bias.
    pub fn with_params(spec: LayerSpec, weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        spec.validate()?;
        let (wshape, blen, _) = spec
            .param_shape()
            .ok_or_else(|| Error::Config(format!("{spec:?} has no parameters")))?;
        if weights.shape() != wshape.as_slice() || bias.shape() != [blen] {
            return Err(Error::dim(format!(
                "{spec:?} needs weights {wshape:?} and bias [{blen}], got {:?} and {:?}",
                weights.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            spec,
            params: Some(LayerParams::new(weights, bias)),
            cache: Cache::Empty,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn params(&self) -> Option<&LayerParams<T>> {
        self.params.as_ref()
    }

    pub fn params_mut(&mut self) -> Option<&mut LayerParams<T>> {
        self.params.as_mut()
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = Cache::Empty;
    }

    fn p(&self) -> &LayerParams<T> {
        self.params.as_ref().expect("parameterized layer")
    }

    /// Pure inference pass: no caching, dropout is the identity.
    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self.spec {
            LayerSpec::Dropout { .. } => Ok(x.clone()),
            _ => self.compute(x).map(|(y, _)| y),
        }
    }

    /// Forward pass that caches what backward needs. `rng` is `Some` in
    /// training mode (dropout active) and `None` at inference.
    pub fn forward(&mut self, x: &Tensor<T>, rng: Option<&mut dyn RngCore>) -> Result<Tensor<T>> {
        if let LayerSpec::Dropout { p } = self.spec {
            let (y, mask) = dropout_forward(x, p, rng)?;
            self.cache = Cache::Mask(mask);
            return Ok(y);
        }
        let (y, cache) = self.compute(x)?;
        self.cache = cache;
        Ok(y)
    }

    fn compute(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Cache<T>)> {
        let spec = self.spec;
        match spec {
            LayerSpec::RowConv { n, channels } => {
                expect_shape(x, &[1, n, n], &spec)?;
                let p = self.p();
                let (w, b) = (p.weights.data(), p.bias.data());
                let xs = x.data();
                let mut out = Vec::with_capacity(channels * n);
                for k in 0..channels {
                    let kernel = &w[k * n..(k + 1) * n];
                    for r in 0..n {
                        out.push(b[k] + dot_slices(kernel, &xs[r * n..(r + 1) * n]));
                    }
                }
                Ok((Tensor::new(vec![channels, n, 1], out)?, Cache::Input(x.clone())))
            }
            LayerSpec::ColConv {
                in_channels,
                n,
                channels,
            } => {
                expect_shape(x, &[in_channels, n, 1], &spec)?;
                let p = self.p();
                let vol = in_channels * n;
                let out = (0..channels)
                    .map(|o| {
                        p.bias.data()[o]
                            + dot_slices(&p.weights.data()[o * vol..(o + 1) * vol], x.data())
                    })
                    .collect();
                Ok((Tensor::new(vec![channels, 1, 1], out)?, Cache::Input(x.clone())))
            }
            LayerSpec::Linear { in_dim, out_dim } => {
                if x.len() != in_dim {
                    return Err(Error::dim(format!(
                        "{spec:?} expects {in_dim} inputs, got shape {:?}",
                        x.shape()
                    )));
                }
                let p = self.p();
                let out = (0..out_dim)
                    .map(|o| {
                        p.bias.data()[o]
                            + dot_slices(&p.weights.data()[o * in_dim..(o + 1) * in_dim], x.data())
                    })
                    .collect();
                Ok((Tensor::vector(out), Cache::Input(x.clone())))
            }
            LayerSpec::InstanceNorm { channels, spatial } => {
                if x.rank() != 3 || x.shape()[0] != channels || x.shape()[1] * x.shape()[2] != spatial
                {
                    return Err(Error::dim(format!(
                        "{spec:?} got input shape {:?}",
                        x.shape()
                    )));
                }
                let (xhat, inv_std) = instance_norm(x, spatial);
                Ok((xhat.clone(), Cache::Norm { xhat, inv_std }))
            }
            LayerSpec::Activation(act) => {
                Ok((x.map(|v| act.apply(v)), Cache::Input(x.clone())))
            }
            LayerSpec::Softmax => {
                let y = softmax(x)?;
                Ok((y.clone(), Cache::Output(y)))
            }
            LayerSpec::Dropout { .. } => unreachable!("dropout handled by caller"),
        }
    }

    /// Propagates `grad` (w.r.t. this layer's output) back to the input,
    /// accumulating parameter gradients.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = std::mem::take(&mut self.cache);
        let spec = self.spec;
        let state_err = || Error::State(format!("backward before forward on {spec:?}"));
        match (spec, cache) {
            (LayerSpec::RowConv { n, channels }, Cache::Input(x)) => {
                expect_grad(grad, &[channels, n, 1], &spec)?;
                let p = self.params.as_mut().expect("parameterized layer");
                let xs = x.data();
                let g = grad.data();
                let mut dx = vec![T::zero(); n * n];
                {
                    let gw = p.grad_weights.data_mut();
                    for k in 0..channels {
                        for r in 0..n {
                            let gkr = g[k * n + r];
                            if gkr == T::zero() {
                                continue;
                            }
                            let row = &xs[r * n..(r + 1) * n];
                            for (acc, &xv) in gw[k * n..(k + 1) * n].iter_mut().zip(row) {
                                *acc += gkr * xv;
                            }
                        }
                    }
                }
                for (k, gb) in p.grad_bias.data_mut().iter_mut().enumerate() {
                    *gb += g[k * n..(k + 1) * n].iter().copied().sum::<T>();
                }
                let w = p.weights.data();
                for k in 0..channels {
                    let kernel = &w[k * n..(k + 1) * n];
                    for r in 0..n {
                        let gkr = g[k * n + r];
                        for (d, &wv) in dx[r * n..(r + 1) * n].iter_mut().zip(kernel) {
                            *d += gkr * wv;
                        }
                    }
                }
                Tensor::new(vec![1, n, n], dx)
            }
            (
                LayerSpec::ColConv {
                    in_channels,
                    n,
                    channels,
                },
                Cache::Input(x),
            ) => {
                expect_grad(grad, &[channels, 1, 1], &spec)?;
                let vol = in_channels * n;
                let p = self.params.as_mut().expect("parameterized layer");
                dense_backward(p, x.data(), grad.data(), vol).and_then(|dx| {
                    Tensor::new(vec![in_channels, n, 1], dx)
                })
            }
            (LayerSpec::Linear { in_dim, out_dim }, Cache::Input(x)) => {
                expect_grad(grad, &[out_dim], &spec)?;
                let p = self.params.as_mut().expect("parameterized layer");
                let dx = dense_backward(p, x.data(), grad.data(), in_dim)?;
                Tensor::new(x.shape().to_vec(), dx)
            }
            (LayerSpec::InstanceNorm { spatial, .. }, Cache::Norm { xhat, inv_std }) => {
                expect_grad(grad, xhat.shape(), &spec)?;
                let m = T::lit(spatial as f64);
                let mut dx = Vec::with_capacity(xhat.len());
                for (c, &istd) in inv_std.iter().enumerate() {
                    let g = &grad.data()[c * spatial..(c + 1) * spatial];
                    let xh = &xhat.data()[c * spatial..(c + 1) * spatial];
                    let sum_g: T = g.iter().copied().sum();
                    let sum_gx = dot_slices(g, xh);
                    for (&gi, &xi) in g.iter().zip(xh) {
                        dx.push(istd / m * (m * gi - sum_g - xi * sum_gx));
                    }
                }
                Tensor::new(xhat.shape().to_vec(), dx)
            }
            (LayerSpec::Activation(act), Cache::Input(x)) => {
                expect_grad(grad, x.shape(), &spec)?;
                let dx = x
                    .data()
                    .iter()
                    .zip(grad.data())
                    .map(|(&xv, &g)| g * act.derivative(xv))
                    .collect();
                Tensor::new(x.shape().to_vec(), dx)
            }
            (LayerSpec::Dropout { .. }, Cache::Mask(mask)) => match mask {
                None => Ok(grad.clone()),
                Some(mask) => {
                    if mask.len() != grad.len() {
                        return Err(Error::dim(format!(
                            "dropout gradient of {} entries for mask of {}",
                            grad.len(),
                            mask.len()
                        )));
                    }
                    let dx = grad.data().iter().zip(&mask).map(|(&g, &m)| g * m).collect();
                    Tensor::new(grad.shape().to_vec(), dx)
                }
            },
            (LayerSpec::Softmax, Cache::Output(y)) => {
                expect_grad(grad, y.shape(), &spec)?;
                let gy = dot_slices(grad.data(), y.data());
                let dx = y
                    .data()
                    .iter()
                    .zip(grad.data())
                    .map(|(&yi, &gi)| yi * (gi - gy))
                    .collect();
                Tensor::new(y.shape().to_vec(), dx)
            }
            _ => Err(state_err()),
        }
    }
}

fn expect_grad<T: Scalar>(grad: &Tensor<T>, shape: &[usize], spec: &LayerSpec) -> Result<()> {
    if grad.shape() != shape {
        return Err(Error::dim(format!(
            "{spec:?} output gradient must have shape {shape:?}, got {:?}",
            grad.shape()
        )));
    }
    Ok(())
}

/// Backward of `y = W x + b` with `W` stored row-major as `[out, in]`.
fn dense_backward<T: Scalar>(
    p: &mut LayerParams<T>,
    x: &[T],
    g: &[T],
    in_dim: usize,
) -> Result<Vec<T>> {
    {
        let gw = p.grad_weights.data_mut();
        for (o, &go) in g.iter().enumerate() {
            if go == T::zero() {
                continue;
            }
            for (acc, &xv) in gw[o * in_dim..(o + 1) * in_dim].iter_mut().zip(x) {
                *acc += go * xv;
            }
        }
    }
    for (gb, &go) in p.grad_bias.data_mut().iter_mut().zip(g) {
        *gb += go;
    }
    let mut dx = vec![T::zero(); in_dim];
    let w = p.weights.data();
    for (o, &go) in g.iter().enumerate() {
        if go == T::zero() {
            continue;
        }
        for (d, &wv) in dx.iter_mut().zip(&w[o * in_dim..(o + 1) * in_dim]) {
            *d += go * wv;
        }
    }
    Ok(dx)
}

/// Per-channel standardization; returns the normalized tensor and each
/// channel's `1 / sqrt(var + eps)`.
fn instance_norm<T: Scalar>(x: &Tensor<T>, spatial: usize) -> (Tensor<T>, Vec<T>) {
    let m = T::lit(spatial as f64);
    let eps = T::lit(INSTANCE_NORM_EPS);
    let mut out = Vec::with_capacity(x.len());
    let mut inv_stds = Vec::new();
    for chunk in x.data().chunks_exact(spatial) {
        let mean = chunk.iter().copied().sum::<T>() / m;
        let var = chunk.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / m;
        let inv_std = T::one() / (var + eps).sqrt();
        out.extend(chunk.iter().map(|&v| (v - mean) * inv_std));
        inv_stds.push(inv_std);
    }
    (
        Tensor::new(x.shape().to_vec(), out).expect("same shape"),
        inv_stds,
    )
}

/// Standalone instance normalization of a `[c, h, w]` tensor.
pub fn instance_norm_forward<T: Scalar>(z: &Tensor<T>) -> Result<Tensor<T>> {
    if z.rank() != 3 {
        return Err(Error::dim(format!(
            "instance norm expects [c, h, w], got {:?}",
            z.shape()
        )));
    }
    let spatial = z.shape()[1] * z.shape()[2];
    LayerSpec::InstanceNorm {
        channels: z.shape()[0],
        spatial,
    }
    .validate()?;
    Ok(instance_norm(z, spatial).0)
}

/// Elementwise activation.
pub fn activation_forward<T: Scalar>(x: &Tensor<T>, act: Activation) -> Tensor<T> {
    x.map(|v| act.apply(v))
}

/// Inverted dropout. With `rng` present each entry is zeroed with
/// probability `p` and survivors are scaled by `1 / (1 - p)`; the returned
/// mask holds the per-entry multiplier. Without `rng` the input passes
/// through unchanged and no mask is produced.
pub fn dropout_forward<T: Scalar>(
    x: &Tensor<T>,
    p: f64,
    rng: Option<&mut dyn RngCore>,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    LayerSpec::Dropout { p }.validate()?;
    let Some(rng) = rng else {
        return Ok((x.clone(), None));
    };
    let keep = T::lit(1.0 / (1.0 - p));
    let mask: Vec<T> = (0..x.len())
        .map(|_| {
            if p > 0.0 && rng.random::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let y = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::new(x.shape().to_vec(), y)?, Some(mask)))
}

/// Numerically stable softmax of a vector.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.rank() != 1 {
        return Err(Error::dim(format!(
            "softmax expects a vector, got {:?}",
            logits.shape()
        )));
    }
    if logits.data().iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric(format!("NaN in softmax input {:?}", logits.data())));
    }
    let max = logits
        .data()
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.data().iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(Tensor::vector(exps.into_iter().map(|e| e / total).collect()))
}
