use serde::{Deserialize, Serialize};

use crate::dataset::PreparedSample;
use crate::error::Result;
use crate::federation::bundle::GlobalBundle;
use crate::models::Classifier;
use crate::scalar::Scalar;

/// How a test sample gets its label.
#[derive(Clone, Copy)]
pub enum Predictor<'a, T> {
    /// Attention-weighted fusion of all site experts.
    Fused(&'a GlobalBundle<T>),
    /// The single most similar site expert.
    HardSelect(&'a GlobalBundle<T>),
    /// One model for every sample.
    Single(&'a Classifier<T>),
}

/// Confusion counts with MDD as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn record(&mut self, truth: u8, predicted: u8) {
        match (truth, predicted) {
            (1, 1) => self.tp += 1,
            (0, 0) => self.tn += 1,
            (0, _) => self.fp += 1,
            _ => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total().max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteEvaluation {
    pub site_id: u16,
    pub confusion: Confusion,
    pub accuracy: f64,
    /// Mean attention weight on the expert whose id equals the sample's
    /// site id; `None` for single-model predictors or when no expert
    /// carries that id.
    pub own_site_attention: Option<f64>,
}

/// Unweighted mean of per-site accuracies.
pub fn average_accuracy(sites: &[SiteEvaluation]) -> f64 {
    sites.iter().map(|s| s.accuracy).sum::<f64>() / sites.len().max(1) as f64
}

pub fn evaluate_site<T: Scalar>(
    predictor: Predictor<'_, T>,
    site_id: u16,
    test: &[&PreparedSample<T>],
) -> Result<SiteEvaluation> {
    let mut confusion = Confusion::default();
    let mut attention = 0.0;
    let bundle = match predictor {
        Predictor::Fused(b) | Predictor::HardSelect(b) => Some(b),
        Predictor::Single(_) => None,
    };
    let has_expert = bundle.is_some_and(|b| b.sites.iter().any(|s| s.site_id == site_id));
    for s in test {
        let label = match predictor {
            Predictor::Fused(b) | Predictor::HardSelect(b) => {
                let p = if matches!(predictor, Predictor::Fused(_)) {
                    b.fuse_prepared(&s.matrix, &s.vector)?
                } else {
                    b.hard_select_prepared(&s.matrix, &s.vector)?
                };
                attention += p.weight_on(s.site_id).as_f64();
                p.predicted_label
            }
            Predictor::Single(c) => c.predict_label(&s.matrix)?,
        };
        confusion.record(s.label, label);
    }
    Ok(SiteEvaluation {
        site_id,
        accuracy: confusion.accuracy(),
        confusion,
        own_site_attention: has_expert.then(|| attention / test.len().max(1) as f64),
    })
}

/// Evaluates each `(site id, test samples)` group.
pub fn evaluate_sites<T: Scalar>(
    predictor: Predictor<'_, T>,
    tests: &[(u16, Vec<&PreparedSample<T>>)],
) -> Result<Vec<SiteEvaluation>> {
    tests
        .iter()
        .map(|(id, samples)| evaluate_site(predictor, *id, samples))
        .collect()
}
