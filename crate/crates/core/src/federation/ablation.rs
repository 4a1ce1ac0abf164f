use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    split_train_test, Dataset, PreparedSample, Split, DEFAULT_TEST_FRACTION, LABEL_MDD, LABEL_NC, UNTAGGED_SUBTYPE,
};
use crate::error::{Error, Result};
use crate::federation::evaluate::{average_accuracy, evaluate_sites, Predictor, SiteEvaluation};
use crate::federation::protocol::{stage1, Client, FederationConfig, Stage1Output};
use crate::models::ClassifierSpec;
use crate::scalar::Scalar;
use crate::seed::{rng_for, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub federation: FederationConfig,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Classifier of the i-th client (ascending client id), cycled.
    pub classifier_specs: Vec<ClassifierSpec>,
}

fn default_test_fraction() -> f64 {
    DEFAULT_TEST_FRACTION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    /// Clients are subtype groups rather than random partitions.
    pub subset: bool,
    /// Attention fusion rather than hard selection.
    pub moe: bool,
    pub per_site: Vec<SiteEvaluation>,
    pub average: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    /// Test-set columns, ascending.
    pub site_ids: Vec<u16>,
    /// Rows in the order (on, on), (on, off), (off, on), (off, off).
    pub cells: Vec<AblationCell>,
}

impl AblationGrid {
    pub fn cell(&self, subset: bool, moe: bool) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.subset == subset && c.moe == moe)
    }
}

/// Per-site train/test splits; training samples prepared for clients,
/// test samples grouped by their original site.
pub struct PreparedSplits<T> {
    pub train: Vec<PreparedSample<T>>,
    pub tests: Vec<(u16, Vec<PreparedSample<T>>)>,
}

pub fn prepare_splits<T: Scalar>(data: &Dataset, seed: u64, test_fraction: f64) -> Result<PreparedSplits<T>> {
    let mut sites: Vec<_> = data.sites.iter().collect();
    sites.sort_by_key(|s| s.site_id);
    let mut train = Vec::new();
    let mut tests = Vec::with_capacity(sites.len());
    for site in sites {
        let mut rng = rng_for(seed, &[stream::SPLIT, site.site_id as u64]);
        let split = split_train_test(&site.samples, test_fraction, &mut rng)?;
        for s in Split::select(&split.train, &site.samples) {
            train.push(s.prepare()?);
        }
        let test = Split::select(&split.test, &site.samples)
            .into_iter()
            .map(|s| s.prepare())
            .collect::<Result<Vec<_>>>()?;
        tests.push((site.site_id, test));
    }
    Ok(PreparedSplits { train, tests })
}

fn spec_for(specs: &[ClassifierSpec], i: usize) -> Result<ClassifierSpec> {
    if specs.is_empty() {
        return Err(Error::Config("no classifier specs given".into()));
    }
    Ok(specs[i % specs.len()])
}

/// Clients formed by subtype tag; client id = subtype.
pub fn subtype_clients<T: Scalar>(train: &[PreparedSample<T>], specs: &[ClassifierSpec]) -> Result<Vec<Client<T>>> {
    let mut groups: BTreeMap<u8, Vec<PreparedSample<T>>> = BTreeMap::new();
    for s in train {
        if s.subtype == UNTAGGED_SUBTYPE {
            return Err(Error::Config(format!(
                "sample from site {} has no subtype tag; subtype partitioning needs tags",
                s.site_id
            )));
        }
        groups.entry(s.subtype).or_default().push(s.clone());
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(i, (subtype, samples))| Client::new(subtype as u16, spec_for(specs, i)?, samples))
        .collect()
}

/// Random label-stratified re-partition of the pooled data into clients
/// with the same ids, specs and per-label counts as `like`.
pub fn random_clients<T: Scalar>(like: &[Client<T>], seed: u64) -> Result<Vec<Client<T>>> {
    let mut rng = rng_for(seed, &[stream::PARTITION]);
    let mut pools: BTreeMap<u8, Vec<PreparedSample<T>>> = BTreeMap::new();
    for c in like {
        for s in c.samples() {
            pools.entry(s.label).or_default().push(s.clone());
        }
    }
    for pool in pools.values_mut() {
        pool.shuffle(&mut rng);
    }
    like.iter()
        .map(|c| {
            let (nc, mdd) = c.label_counts();
            let mut samples = Vec::with_capacity(nc + mdd);
            for (label, k) in [(LABEL_NC, nc), (LABEL_MDD, mdd)] {
                let pool = pools.get_mut(&label).expect("label present in some client");
                samples.extend(pool.drain(pool.len() - k..));
            }
            Client::new(c.site_id, c.classifier_spec, samples)
        })
        .collect()
}

fn cell<T: Scalar>(
    subset: bool,
    moe: bool,
    out: &Stage1Output<T>,
    tests: &[(u16, Vec<&PreparedSample<T>>)],
) -> Result<AblationCell> {
    let predictor = if moe {
        Predictor::Fused(&out.bundle)
    } else {
        Predictor::HardSelect(&out.bundle)
    };
    let per_site = evaluate_sites(predictor, tests)?;
    Ok(AblationCell {
        subset,
        moe,
        average: average_accuracy(&per_site),
        per_site,
    })
}

/// The subset × MoE grid. Both partitions train once; each trained
/// bundle is evaluated with and without attention fusion.
pub fn run_ablation<T: Scalar>(data: &Dataset, cfg: &AblationConfig) -> Result<AblationGrid> {
    cfg.federation.validate()?;
    let seed = cfg.federation.seed;
    let splits = prepare_splits::<T>(data, seed, cfg.test_fraction)?;
    let tests: Vec<(u16, Vec<&PreparedSample<T>>)> =
        splits.tests.iter().map(|(id, s)| (*id, s.iter().collect())).collect();

    let by_subtype = subtype_clients(&splits.train, &cfg.classifier_specs)?;
    let random = random_clients(&by_subtype, seed)?;
    let on = stage1(&by_subtype, &cfg.federation)?;
    let off = stage1(&random, &cfg.federation)?;

    Ok(AblationGrid {
        site_ids: tests.iter().map(|(id, _)| *id).collect(),
        cells: vec![
            cell(true, true, &on, &tests)?,
            cell(true, false, &on, &tests)?,
            cell(false, true, &off, &tests)?,
            cell(false, false, &off, &tests)?,
        ],
    })
}
