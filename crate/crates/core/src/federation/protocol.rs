use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{PreparedSample, LABEL_MDD, LABEL_NC};
use crate::error::{Error, Result};
use crate::federation::aggregate::{aggregate_autoencoders, site_weights, weighted_average};
use crate::federation::bundle::{GlobalBundle, InferenceOptions};
use crate::federation::payload::SitePayload;
use crate::models::{
    compute_templates, train_local_autoencoder, train_local_classifier, Autoencoder, AutoencoderReport,
    AutoencoderSpec, Classifier, ClassifierReport, ClassifierSpec, EpochRecord, TrainConfig,
};
use crate::nn::ParamSet;
use crate::scalar::Scalar;
use crate::seed::{rng_for, stream};
use crate::tensor::Tensor;

/// A data-holding participant. Its samples stay inside the client; only
/// [`SitePayload`]s leave it.
#[derive(Clone, Debug)]
pub struct Client<T> {
    pub site_id: u16,
    pub classifier_spec: ClassifierSpec,
    samples: Vec<PreparedSample<T>>,
}

impl<T: Scalar> Client<T> {
    pub fn new(site_id: u16, classifier_spec: ClassifierSpec, samples: Vec<PreparedSample<T>>) -> Result<Self> {
        for label in [LABEL_NC, LABEL_MDD] {
            if !samples.iter().any(|s| s.label == label) {
                return Err(Error::MissingClass { site_id, label });
            }
        }
        if let Some(s) = samples.iter().find(|s| s.matrix.shape() != [classifier_spec.n, classifier_spec.n]) {
            return Err(Error::dim(format!(
                "site {site_id}: sample of shape {:?} for a classifier over n = {}",
                s.matrix.shape(),
                classifier_spec.n
            )));
        }
        Ok(Self {
            site_id,
            classifier_spec,
            samples,
        })
    }

    /// A single client holding every sample of `clients`, in order.
    pub fn pool(site_id: u16, spec: ClassifierSpec, clients: &[Client<T>]) -> Result<Self> {
        let samples = clients.iter().flat_map(|c| c.samples.iter().cloned()).collect();
        Self::new(site_id, spec, samples)
    }

    pub fn samples(&self) -> &[PreparedSample<T>] {
        &self.samples
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn label_counts(&self) -> (usize, usize) {
        let mdd = self.samples.iter().filter(|s| s.label == LABEL_MDD).count();
        (self.samples.len() - mdd, mdd)
    }

    fn vectors(&self) -> Vec<&Tensor<T>> {
        self.samples.iter().map(|s| &s.vector).collect()
    }

    fn labelled_matrices(&self) -> Vec<(&Tensor<T>, u8)> {
        self.samples.iter().map(|s| (&s.matrix, s.label)).collect()
    }

    /// Local autoencoder training starting from the broadcast parameters.
    pub fn train_autoencoder(
        &self,
        spec: AutoencoderSpec,
        global: &ParamSet<T>,
        cfg: &TrainConfig,
        seed: u64,
        round: usize,
    ) -> Result<(Autoencoder<T>, AutoencoderReport)> {
        let mut ae = Autoencoder::from_snapshot(spec, global)?;
        let mut rng = rng_for(seed, &[stream::AUTOENCODER_TRAIN, self.site_id as u64, round as u64]);
        let report = train_local_autoencoder(&mut ae, &self.vectors(), cfg, &mut rng)?;
        Ok((ae, report))
    }

    /// Trains this site's classifier from its own seeded initialization.
    pub fn train_classifier(&self, cfg: &TrainConfig, seed: u64) -> Result<(Classifier<T>, ClassifierReport)> {
        let mut init = rng_for(seed, &[stream::CLASSIFIER_INIT, self.site_id as u64]);
        let mut clf = Classifier::new(self.classifier_spec, &mut init)?;
        let mut rng = rng_for(seed, &[stream::CLASSIFIER_TRAIN, self.site_id as u64]);
        let report = train_local_classifier(&mut clf, &self.labelled_matrices(), cfg, &mut rng)?;
        Ok((clf, report))
    }

    /// Continues training a given classifier for one federated round.
    pub(crate) fn continue_classifier(
        &self,
        spec: ClassifierSpec,
        start: &ParamSet<T>,
        cfg: &TrainConfig,
        seed: u64,
        round: usize,
    ) -> Result<(Classifier<T>, ClassifierReport)> {
        let mut clf = Classifier::from_snapshot(spec, start)?;
        let mut rng = rng_for(seed, &[stream::CLASSIFIER_TRAIN, self.site_id as u64, round as u64]);
        let report = train_local_classifier(&mut clf, &self.labelled_matrices(), cfg, &mut rng)?;
        Ok((clf, report))
    }

    /// The final-round client job: templates from the local encoder, the
    /// local classifier, and the upload.
    pub fn build_payload(
        &self,
        autoencoder: &Autoencoder<T>,
        classifier: &Classifier<T>,
    ) -> Result<SitePayload<T>> {
        let templates = compute_templates(self.site_id, self.samples.iter().map(|s| (&s.vector, s.label)), autoencoder)?;
        Ok(SitePayload {
            site_id: self.site_id,
            autoencoder: autoencoder.snapshot(),
            classifier_spec: *classifier.spec(),
            classifier: classifier.snapshot(),
            templates,
            sample_count: self.samples.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub seed: u64,
    /// Autoencoder federation rounds (at least 1).
    pub rounds: usize,
    pub autoencoder: AutoencoderSpec,
    pub autoencoder_train: TrainConfig,
    pub classifier_train: TrainConfig,
    /// Optional per-round override of autoencoder epochs; round `r` uses
    /// entry `r - 1` when present.
    #[serde(default)]
    pub autoencoder_epochs_by_round: Vec<usize>,
    #[serde(default)]
    pub inference: InferenceOptions,
    /// Train clients on the rayon pool instead of sequentially.
    #[serde(default = "yes")]
    pub parallel: bool,
}

fn yes() -> bool {
    true
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("at least one federated round is required".into()));
        }
        if self.autoencoder_epochs_by_round.len() > self.rounds {
            return Err(Error::Config(format!(
                "{} per-round epoch overrides for {} rounds",
                self.autoencoder_epochs_by_round.len(),
                self.rounds
            )));
        }
        self.autoencoder.validate()?;
        self.autoencoder_train.validate()?;
        self.classifier_train.validate()
    }

    fn autoencoder_cfg(&self, round: usize) -> TrainConfig {
        TrainConfig {
            epochs: self
                .autoencoder_epochs_by_round
                .get(round - 1)
                .copied()
                .unwrap_or(self.autoencoder_train.epochs),
            ..self.autoencoder_train
        }
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub phase: String,
    pub round: usize,
    pub site_id: u16,
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

pub(crate) fn log_rows<'a>(phase: &str, round: usize, site_id: u16, epochs: &'a [EpochRecord]) -> impl Iterator<Item = TrainLogRow> + 'a {
    let phase = phase.to_string();
    epochs.iter().map(move |e| TrainLogRow {
        phase: phase.clone(),
        round,
        site_id,
        epoch: e.epoch,
        loss: e.loss,
        accuracy: e.accuracy,
    })
}

pub struct Stage1Output<T> {
    pub bundle: GlobalBundle<T>,
    /// Final-round uploads, in client order.
    pub payloads: Vec<SitePayload<T>>,
    pub log: Vec<TrainLogRow>,
}

/// Runs `f` for every client, in parallel if requested, tagging failures
/// with the site id. Results keep client order.
pub(crate) fn for_each_client<T, R, F>(clients: &[Client<T>], parallel: bool, f: F) -> Result<Vec<R>>
where
    T: Scalar,
    R: Send,
    F: Fn(&Client<T>) -> Result<R> + Sync,
{
    let wrap = |c: &Client<T>| {
        f(c).map_err(|e| Error::ClientFailure {
            site_id: c.site_id,
            source: Box::new(e),
        })
    };
    if parallel {
        clients.par_iter().map(wrap).collect()
    } else {
        clients.iter().map(wrap).collect()
    }
}

pub(crate) fn check_clients<T: Scalar>(clients: &[Client<T>]) -> Result<()> {
    if clients.is_empty() {
        return Err(Error::Protocol("no clients".into()));
    }
    let mut ids: Vec<u16> = clients.iter().map(|c| c.site_id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Protocol(format!("duplicate client ids {ids:?}")));
    }
    Ok(())
}

/// Stage I: `rounds` rounds of local autoencoder training and weighted
/// aggregation, then templates and classifiers from the final round.
pub fn stage1<T: Scalar>(clients: &[Client<T>], cfg: &FederationConfig) -> Result<Stage1Output<T>> {
    cfg.validate()?;
    check_clients(clients)?;
    let mut init = rng_for(cfg.seed, &[stream::AUTOENCODER_INIT]);
    let mut global = Autoencoder::<T>::new(cfg.autoencoder, &mut init)?.snapshot();
    let counts: Vec<usize> = clients.iter().map(Client::sample_count).collect();
    let weights = site_weights(&counts)?;
    let mut log = Vec::new();

    for round in 1..cfg.rounds {
        let ae_cfg = cfg.autoencoder_cfg(round);
        let results = for_each_client(clients, cfg.parallel, |c| {
            c.train_autoencoder(cfg.autoencoder, &global, &ae_cfg, cfg.seed, round)
        })?;
        for (c, (_, rep)) in clients.iter().zip(&results) {
            log.extend(log_rows("autoencoder", round, c.site_id, &rep.epochs));
        }
        let snaps: Vec<ParamSet<T>> = results.iter().map(|(ae, _)| ae.snapshot()).collect();
        global = weighted_average(&snaps.iter().collect::<Vec<_>>(), &weights)?;
    }

    let last = cfg.rounds;
    let ae_cfg = cfg.autoencoder_cfg(last);
    let results = for_each_client(clients, cfg.parallel, |c| {
        let (ae, ae_rep) = c.train_autoencoder(cfg.autoencoder, &global, &ae_cfg, cfg.seed, last)?;
        let (clf, clf_rep) = c.train_classifier(&cfg.classifier_train, cfg.seed)?;
        Ok((c.build_payload(&ae, &clf)?, ae_rep, clf_rep))
    })?;
    let mut payloads = Vec::with_capacity(results.len());
    for (c, (payload, ae_rep, clf_rep)) in clients.iter().zip(results) {
        log.extend(log_rows("autoencoder", last, c.site_id, &ae_rep.epochs));
        log.extend(log_rows("classifier", last, c.site_id, &clf_rep.epochs));
        payloads.push(payload);
    }

    let global = server_aggregate(&payloads)?;
    let bundle = GlobalBundle::assemble(cfg.autoencoder, &global, &payloads, cfg.inference)?;
    Ok(Stage1Output {
        bundle,
        payloads,
        log,
    })
}

/// The server's view: payloads in, global autoencoder out.
fn server_aggregate<T: Scalar>(payloads: &[SitePayload<T>]) -> Result<ParamSet<T>> {
    for p in payloads {
        p.validate()?;
    }
    aggregate_autoencoders(payloads)
}
