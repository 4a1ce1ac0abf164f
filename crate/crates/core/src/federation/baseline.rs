use crate::error::{Error, Result};
use crate::federation::aggregate::{site_weights, weighted_average};
use crate::federation::protocol::{check_clients, for_each_client, Client, FederationConfig, TrainLogRow};
use crate::models::{Classifier, ClassifierSpec};
use crate::nn::ParamSet;
use crate::scalar::Scalar;
use crate::seed::{rng_for, stream};

pub struct FedAvgOutput<T> {
    pub classifier: Classifier<T>,
    pub weights: Vec<f64>,
    pub log: Vec<TrainLogRow>,
}

/// Federated averaging of one shared classifier architecture over
/// `cfg.rounds` rounds of `cfg.classifier_train` local epochs.
pub fn fedavg_baseline<T: Scalar>(clients: &[Client<T>], cfg: &FederationConfig) -> Result<FedAvgOutput<T>> {
    cfg.validate()?;
    check_clients(clients)?;
    let spec = clients[0].classifier_spec;
    if let Some(c) = clients.iter().find(|c| !c.classifier_spec.same_architecture(&spec)) {
        return Err(Error::Homogeneity(format!(
            "FedAvg needs one classifier architecture; site {} uses {} ({}, {}) but site {} uses {} ({}, {})",
            c.site_id,
            c.classifier_spec.variant,
            c.classifier_spec.c1,
            c.classifier_spec.c2,
            clients[0].site_id,
            spec.variant,
            spec.c1,
            spec.c2
        )));
    }
    let counts: Vec<usize> = clients.iter().map(Client::sample_count).collect();
    let weights = site_weights(&counts)?;
    let mut init = rng_for(cfg.seed, &[stream::CLASSIFIER_INIT]);
    let mut global = Classifier::<T>::new(spec, &mut init)?.snapshot();
    let mut log = Vec::new();
    for round in 1..=cfg.rounds {
        let results = for_each_client(clients, cfg.parallel, |c| {
            c.continue_classifier(spec, &global, &cfg.classifier_train, cfg.seed, round)
        })?;
        for (c, (_, rep)) in clients.iter().zip(&results) {
            log.extend(rep.epochs.iter().map(|e| TrainLogRow {
                phase: "fedavg".into(),
                round,
                site_id: c.site_id,
                epoch: e.epoch,
                loss: e.loss,
                accuracy: e.accuracy,
            }));
        }
        let snaps: Vec<ParamSet<T>> = results.iter().map(|(clf, _)| clf.snapshot()).collect();
        global = weighted_average(&snaps.iter().collect::<Vec<_>>(), &weights)?;
    }
    Ok(FedAvgOutput {
        classifier: Classifier::from_snapshot(spec, &global)?,
        weights,
        log,
    })
}

/// One classifier trained centrally on the union of all clients' data.
/// Not federated; a reference point only.
pub fn pooled_single<T: Scalar>(
    clients: &[Client<T>],
    spec: ClassifierSpec,
    cfg: &FederationConfig,
) -> Result<(Classifier<T>, Vec<TrainLogRow>)> {
    cfg.validate()?;
    check_clients(clients)?;
    let pooled = Client::pool(0, spec, clients)?;
    let (clf, rep) = pooled.train_classifier(&cfg.classifier_train, cfg.seed)?;
    let log = rep
        .epochs
        .iter()
        .map(|e| TrainLogRow {
            phase: "pooled".into(),
            round: 1,
            site_id: 0,
            epoch: e.epoch,
            loss: e.loss,
            accuracy: e.accuracy,
        })
        .collect();
    Ok((clf, log))
}
