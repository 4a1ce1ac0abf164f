use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::autoencoder::Autoencoder;
use crate::models::classifier::{predicted_label, Classifier};
use crate::nn::{cosine_reconstruction_loss, cross_entropy_loss, Adam, LayerParams};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_LR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Samples per optimizer step; gradients are averaged over the batch.
    #[serde(default = "one")]
    pub batch_size: usize,
}

fn one() -> usize {
    1
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: DEFAULT_LR,
            batch_size: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Adam::<f64>::new(self.lr).map(|_| ())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    /// Running training accuracy during the epoch (classifiers only).
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderReport {
    pub initial_loss: f64,
    /// Mean loss of the final epoch, or `initial_loss` when no epochs ran.
    pub final_loss: f64,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub initial_accuracy: f64,
    /// Inference-mode accuracy on the training data after the last epoch.
    pub final_accuracy: f64,
    pub final_loss: f64,
    pub epochs: Vec<EpochRecord>,
}

fn diverged(epoch: usize, sample: usize, detail: impl Into<String>) -> Error {
    Error::TrainingDiverged {
        epoch,
        sample,
        detail: detail.into(),
    }
}

fn finite_or_diverged<T: Scalar>(v: T, epoch: usize, sample: usize, what: &str) -> Result<f64> {
    let f = v.as_f64();
    if f.is_finite() {
        Ok(f)
    } else {
        Err(diverged(epoch, sample, format!("{what} is {f}")))
    }
}

fn scale_grads<'a, T: Scalar>(params: impl Iterator<Item = &'a mut LayerParams<T>>, k: T) {
    for p in params {
        for g in p.grads_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }
}

/// Drives the shuffled per-epoch loop shared by both trainers. `sample`
/// runs forward and backward for one index and returns its loss;
/// `step` applies the optimizer with the given gradient scale.
fn run_epochs(
    count: usize,
    cfg: &TrainConfig,
    rng: &mut dyn RngCore,
    mut zero: impl FnMut(),
    mut sample: impl FnMut(usize, usize, &mut dyn RngCore) -> Result<(f64, bool)>,
    mut step: impl FnMut(usize) -> Result<()>,
) -> Result<Vec<EpochRecord>> {
    let mut order: Vec<usize> = (0..count).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        let (mut total, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            zero();
            for &i in chunk {
                let (loss, hit) = sample(epoch, i, rng)?;
                total += loss;
                correct += usize::from(hit);
            }
            step(chunk.len())?;
        }
        records.push(EpochRecord {
            epoch,
            loss: total / count as f64,
            accuracy: Some(correct as f64 / count as f64),
        });
    }
    Ok(records)
}

/// Mean reconstruction loss without updating anything.
pub fn autoencoder_loss<T: Scalar>(ae: &Autoencoder<T>, data: &[&Tensor<T>]) -> Result<f64> {
    let mut total = 0.0;
    for x in data {
        let (s, _) = ae.forward(x)?;
        total += cosine_reconstruction_loss(&s, x)?.0.as_f64();
    }
    Ok(total / data.len().max(1) as f64)
}

/// Per-sample Adam descent on the cosine reconstruction loss.
pub fn train_local_autoencoder<T: Scalar>(
    ae: &mut Autoencoder<T>,
    data: &[&Tensor<T>],
    cfg: &TrainConfig,
    rng: &mut dyn RngCore,
) -> Result<AutoencoderReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("autoencoder training needs at least one sample".into()));
    }
    let initial_loss = autoencoder_loss(ae, data)?;
    let mut opt = Adam::new(cfg.lr)?;
    let ae_cell = std::cell::RefCell::new(ae);
    let mut records = run_epochs(
        data.len(),
        cfg,
        rng,
        || ae_cell.borrow_mut().zero_grad(),
        |epoch, i, _| {
            let mut ae = ae_cell.borrow_mut();
            let x = data[i];
            let (s, _) = ae.forward_cached(x)?;
            let (loss, grad) =
                cosine_reconstruction_loss(&s, x).map_err(|e| diverged(epoch, i, e.to_string()))?;
            let loss = finite_or_diverged(loss, epoch, i, "reconstruction loss")?;
            ae.backward(&grad)?;
            Ok((loss, false))
        },
        |batch| {
            let mut ae = ae_cell.borrow_mut();
            if batch > 1 {
                scale_grads(ae.params_mut(), T::one() / T::from_usize(batch).expect("batch fits"));
            }
            opt.step(ae.params_mut())
        },
    )?;
    let ae = ae_cell.into_inner();
    ae.clear_cache();
    records.iter_mut().for_each(|r| r.accuracy = None);
    Ok(AutoencoderReport {
        initial_loss,
        final_loss: records.last().map_or(initial_loss, |r| r.loss),
        epochs: records,
    })
}

/// Inference-mode accuracy over `(x, y)` pairs.
pub fn classifier_accuracy<T: Scalar>(clf: &Classifier<T>, data: &[(&Tensor<T>, u8)]) -> Result<f64> {
    let mut correct = 0usize;
    for (x, y) in data {
        correct += usize::from(clf.predict_label(x)? == *y);
    }
    Ok(correct as f64 / data.len().max(1) as f64)
}

/// Per-sample Adam descent on cross-entropy, dropout active.
pub fn train_local_classifier<T: Scalar>(
    clf: &mut Classifier<T>,
    data: &[(&Tensor<T>, u8)],
    cfg: &TrainConfig,
    rng: &mut dyn RngCore,
) -> Result<ClassifierReport> {
    cfg.validate()?;
    for label in [0u8, 1] {
        if !data.iter().any(|(_, y)| *y == label) {
            return Err(Error::Config(format!(
                "classifier training data has no samples with label {label}"
            )));
        }
    }
    let initial_accuracy = classifier_accuracy(clf, data)?;
    let mut opt = Adam::new(cfg.lr)?;
    let cell = std::cell::RefCell::new(clf);
    let records = run_epochs(
        data.len(),
        cfg,
        rng,
        || cell.borrow_mut().zero_grad(),
        |epoch, i, rng| {
            let mut clf = cell.borrow_mut();
            let (x, y) = data[i];
            let logits = clf.forward(x, Some(rng))?;
            let (loss, grad) = cross_entropy_loss(&logits, usize::from(y))
                .map_err(|e| diverged(epoch, i, e.to_string()))?;
            let loss = finite_or_diverged(loss, epoch, i, "cross-entropy")?;
            clf.backward(&grad)?;
            Ok((loss, predicted_label(&logits) == y))
        },
        |batch| {
            let mut clf = cell.borrow_mut();
            if batch > 1 {
                scale_grads(clf.params_mut(), T::one() / T::from_usize(batch).expect("batch fits"));
            }
            opt.step(clf.params_mut())
        },
    )?;
    let clf = cell.into_inner();
    clf.clear_cache();
    let final_accuracy = classifier_accuracy(clf, data)?;
    Ok(ClassifierReport {
        initial_accuracy,
        final_accuracy,
        final_loss: records.last().map_or(f64::NAN, |r| r.loss),
        epochs: records,
    })
}
