use crate::error::{Error, Result};
use crate::nn::layers::LayerParams;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam with bias-corrected moment estimates. Moment buffers are matched to
/// parameters by position, so every step must visit parameters in the same
/// order.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    lr: f64,
    steps: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive and finite, got {lr}"
            )));
        }
        Ok(Self {
            lr,
            steps: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut LayerParams<T>>) -> Result<()> {
        self.steps += 1;
        let t = self.steps as f64;
        let bc1 = T::lit(1.0 - ADAM_BETA1.powf(t));
        let bc2 = T::lit(1.0 - ADAM_BETA2.powf(t));
        let (b1, b2) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2));
        let (lr, eps) = (T::lit(self.lr), T::lit(ADAM_EPS));
        let mut idx = 0;
        for layer in params {
            for (param, grad) in layer.pairs_mut() {
                if idx == self.m.len() {
                    self.m.push(Tensor::zeros_like(param));
                    self.v.push(Tensor::zeros_like(param));
                }
                let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
                if m.shape() != param.shape() || grad.shape() != param.shape() {
                    return Err(Error::State(format!(
                        "optimizer slot {idx} has shape {:?}, parameter {:?}, gradient {:?}",
                        m.shape(),
                        param.shape(),
                        grad.shape()
                    )));
                }
                for (((p, &g), mi), vi) in param
                    .data_mut()
                    .iter_mut()
                    .zip(grad.data())
                    .zip(m.data_mut())
                    .zip(v.data_mut())
                {
                    *mi = b1 * *mi + (T::one() - b1) * g;
                    *vi = b2 * *vi + (T::one() - b2) * g * g;
                    let mhat = *mi / bc1;
                    let vhat = *vi / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + eps);
                }
                idx += 1;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(w: f64) -> LayerParams<f64> {
        LayerParams::new(Tensor::vector(vec![w]), Tensor::vector(vec![0.0]))
    }

    #[test]
    fn rejects_non_positive_lr() {
        assert!(Adam::<f64>::new(0.0).is_err());
        assert!(Adam::<f64>::new(-1e-3).is_err());
        assert!(Adam::<f64>::new(f64::NAN).is_err());
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = scalar_param(0.7);
        let mut adam = Adam::new(0.1).unwrap();
        for _ in 0..10 {
            adam.step([&mut p]).unwrap();
        }
        assert_eq!(p.weights.data(), &[0.7]);
        assert_eq!(adam.steps(), 10);
    }

    #[test]
    fn minimizes_square() {
        // f(w) = w^2 from w = 1 with lr 0.1: |w| falls monotonically until the
        // first sign change (step 12), then Adam's momentum makes it ring down.
        let mut p = scalar_param(1.0);
        let mut adam = Adam::new(0.1).unwrap();
        let mut trace = vec![1.0f64];
        for _ in 0..50 {
            let w = p.weights.data()[0];
            p.zero_grad();
            p.grad_weights.data_mut()[0] = 2.0 * w;
            adam.step([&mut p]).unwrap();
            trace.push(p.weights.data()[0]);
        }
        let first_cross = trace.iter().position(|&w| w <= 0.0).unwrap();
        assert_eq!(first_cross, 12);
        for pair in trace[..first_cross].windows(2) {
            assert!(pair[1].abs() < pair[0].abs());
        }
        assert!(trace[50].abs() < 0.01, "final {}", trace[50]);
        assert!(trace[31..].iter().all(|w| w.abs() < 0.11));
    }

    #[test]
    fn identical_gradient_sequences_stay_bit_identical() {
        let mut a = scalar_param(0.3);
        let mut b = a.clone();
        let mut oa = Adam::new(0.01).unwrap();
        let mut ob = Adam::new(0.01).unwrap();
        for i in 0..20 {
            let g = (i as f64 * 0.37).sin();
            for (p, o) in [(&mut a, &mut oa), (&mut b, &mut ob)] {
                p.grad_weights.data_mut()[0] = g;
                p.grad_bias.data_mut()[0] = -g;
                o.step([p]).unwrap();
            }
        }
        assert_eq!(a, b);
    }
}
