use crate::error::{Error, Result};
use crate::nn::layers::softmax;
use crate::scalar::Scalar;
use crate::tensor::{dot, l2_norm, Tensor, DEGENERATE_NORM};

/// `1 - cos(s, x)` and its gradient with respect to the reconstruction `s`.
pub fn cosine_reconstruction_loss<T: Scalar>(
    s: &Tensor<T>,
    x: &Tensor<T>,
) -> Result<(T, Tensor<T>)> {
    let sx = dot(s, x)?;
    let ns = l2_norm(s);
    let nx = l2_norm(x);
    if !(nx > T::zero()) {
        return Err(Error::Numeric("reconstruction target has zero norm".into()));
    }
    if !(ns >= T::lit(DEGENERATE_NORM)) {
        return Err(Error::Numeric(format!(
            "reconstruction collapsed: norm {:e}",
            ns.as_f64()
        )));
    }
    let cos = (sx / (ns * nx)).max(-T::one()).min(T::one());
    let a = T::one() / (ns * nx);
    let b = sx / (ns * ns * ns * nx);
    let grad = s
        .data()
        .iter()
        .zip(x.data())
        .map(|(&si, &xi)| b * si - a * xi)
        .collect();
    Ok((T::one() - cos, Tensor::new(s.shape().to_vec(), grad)?))
}

/// Softmax cross-entropy of raw logits against a class index, with the
/// gradient `softmax(z) - onehot(label)`.
pub fn cross_entropy_loss<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<(T, Tensor<T>)> {
    if logits.rank() != 1 || label >= logits.len() {
        return Err(Error::dim(format!(
            "label {label} for logits of shape {:?}",
            logits.shape()
        )));
    }
    if !logits.all_finite() {
        return Err(Error::Numeric(format!(
            "non-finite logits {:?}",
            logits.data()
        )));
    }
    let z = logits.data();
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
    let mut grad = softmax(logits)?;
    grad.data_mut()[label] -= T::one();
    Ok((lse - z[label], grad))
}
