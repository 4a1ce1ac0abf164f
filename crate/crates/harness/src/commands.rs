use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use aaa_core::dataset::{generate_dataset, read_dataset, upper_tri_len, write_dataset, Dataset, PreparedSample, MANIFEST_FILE};
use aaa_core::federation::{
    evaluate_sites, fedavg_baseline, pooled_single, prepare_splits, run_ablation, stage1, AblationConfig, Client,
    GlobalBundle, Predictor, PreparedSplits,
};
use aaa_core::models::Classifier;
use aaa_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{DatasetSource, ExperimentConfig, Mode};
use crate::report::{summarize, write_grid, write_json, write_train_log, AblationSummary, MetricsReport};

pub const RUN_CONFIG: &str = "config.json";
pub const BUNDLE_DIR: &str = "bundle";
pub const CLASSIFIER_FILE: &str = "classifier.ckpt";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const MODEL_DIGEST: &str = "model.sha256";
pub const TIMING_FILE: &str = "timing.json";

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.dataset {
        DatasetSource::Generate(spec) => generate_dataset(spec),
        DatasetSource::Path(p) => read_dataset(p),
    }
}

#[derive(Debug, Serialize)]
pub struct GenerateSummary {
    pub n: usize,
    pub edges: usize,
    pub sites: Vec<(u16, usize, usize)>,
    pub total: usize,
    pub manifest_sha256: String,
}

/// Writes site files and a manifest for a generated dataset.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<GenerateSummary> {
    let DatasetSource::Generate(spec) = &cfg.dataset else {
        return Err(Error::Config("gen needs a generated dataset, not a path".into()));
    };
    let data = generate_dataset(spec)?;
    create_dir(out)?;
    let manifest = write_dataset(&data, out)?;
    let mpath = out.join(MANIFEST_FILE);
    let bytes = std::fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
    write_json(&out.join("dataset_spec.json"), spec)?;
    Ok(GenerateSummary {
        n: data.n,
        edges: upper_tri_len(data.n),
        total: data.total_samples(),
        sites: manifest.sites.iter().map(|s| (s.site_id, s.n_mdd, s.n_nc)).collect(),
        manifest_sha256: sha256_hex(&bytes),
    })
}

/// Training samples grouped into one client per original site.
fn site_clients(cfg: &ExperimentConfig, n: usize, splits: &PreparedSplits<f64>) -> Result<Vec<Client<f64>>> {
    let mut by_site: BTreeMap<u16, Vec<PreparedSample<f64>>> = BTreeMap::new();
    for s in &splits.train {
        by_site.entry(s.site_id).or_default().push(s.clone());
    }
    let specs = cfg.classifier_specs(n, by_site.len())?;
    by_site
        .into_iter()
        .zip(specs)
        .map(|((id, samples), spec)| Client::new(id, spec, samples))
        .collect()
}

fn splits_for(cfg: &ExperimentConfig, data: &Dataset) -> Result<PreparedSplits<f64>> {
    prepare_splits(data, cfg.seed, cfg.test_fraction)
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub config_fingerprint: String,
    pub model_sha256: String,
    pub log_rows: usize,
    pub seconds: f64,
}

/// Trains the configured mode and writes the model, log and resolved config.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainSummary> {
    let cfg = cfg.clone().resolved();
    cfg.validate()?;
    let start = Instant::now();
    let data = load_dataset(&cfg)?;
    let splits = splits_for(&cfg, &data)?;
    let clients = site_clients(&cfg, data.n, &splits)?;
    let fed = cfg.federation(data.n)?;
    create_dir(out)?;

    let mut model_files: Vec<PathBuf> = Vec::new();
    let log = match cfg.mode {
        Mode::Aaa | Mode::HardSelect => {
            let s1 = stage1(&clients, &fed)?;
            let dir = out.join(BUNDLE_DIR);
            let manifest = s1.bundle.save(&dir, &cfg.fingerprint())?;
            model_files.push(dir.join(aaa_core::federation::BUNDLE_AUTOENCODER));
            model_files.push(dir.join(aaa_core::federation::BUNDLE_TEMPLATES));
            model_files.push(dir.join(aaa_core::federation::BUNDLE_MANIFEST));
            for s in &manifest.sites {
                model_files.push(dir.join(&s.classifier_file));
                model_files.extend(s.local_autoencoder_file.iter().map(|f| dir.join(f)));
            }
            s1.log
        }
        Mode::Fedavg => {
            let fa = fedavg_baseline(&clients, &fed)?;
            let path = out.join(CLASSIFIER_FILE);
            fa.classifier.save(&path)?;
            model_files.push(path);
            fa.log
        }
        Mode::PooledSingle => {
            let spec = cfg.classifier_specs(data.n, 1)?[0];
            let (clf, log) = pooled_single(&clients, spec, &fed)?;
            let path = out.join(CLASSIFIER_FILE);
            clf.save(&path)?;
            model_files.push(path);
            log
        }
    };
    write_train_log(&out.join(TRAIN_LOG), &log)?;
    write_json(&out.join(RUN_CONFIG), &cfg)?;

    let mut hasher = Sha256::new();
    for f in &model_files {
        hasher.update(std::fs::read(f).map_err(|e| Error::io(f, e))?);
    }
    let model_sha256 = hex::encode(hasher.finalize());
    std::fs::write(out.join(MODEL_DIGEST), format!("{model_sha256}\n")).map_err(|e| Error::io(out, e))?;
    Ok(TrainSummary {
        config_fingerprint: cfg.fingerprint(),
        model_sha256,
        log_rows: log.len(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Reads a run's resolved config; `mode` may switch between the two
/// bundle modes, which share one trained bundle.
pub fn run_config(run: &Path, mode: Option<Mode>, data: Option<&Path>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&run.join(RUN_CONFIG))?;
    if let Some(m) = mode {
        if m != cfg.mode && !(m.uses_bundle() && cfg.mode.uses_bundle()) {
            return Err(Error::Config(format!(
                "run {} was trained in mode {}; cannot evaluate it as {m}",
                run.display(),
                cfg.mode
            )));
        }
        cfg.mode = m;
    }
    if let Some(p) = data {
        cfg.dataset = DatasetSource::Path(p.to_path_buf());
    }
    Ok(cfg)
}

/// Evaluates a trained run on its held-out split and writes the report.
pub fn cmd_eval(run: &Path, mode: Option<Mode>, data: Option<&Path>) -> Result<MetricsReport> {
    let start = Instant::now();
    let cfg = run_config(run, mode, data)?;
    let dataset = load_dataset(&cfg)?;
    let splits = splits_for(&cfg, &dataset)?;
    let tests: Vec<(u16, Vec<&PreparedSample<f64>>)> =
        splits.tests.iter().map(|(id, s)| (*id, s.iter().collect())).collect();

    let sites = if cfg.mode.uses_bundle() {
        let (bundle, _) = GlobalBundle::<f64>::load(&run.join(BUNDLE_DIR))?;
        let expected = bundle.autoencoder.spec().input_dim;
        if expected != upper_tri_len(dataset.n) {
            return Err(Error::dim(format!(
                "bundle expects {expected} edges but the dataset has n = {} ({} edges)",
                dataset.n,
                upper_tri_len(dataset.n)
            )));
        }
        let predictor = match cfg.mode {
            Mode::Aaa => Predictor::Fused(&bundle),
            _ => Predictor::HardSelect(&bundle),
        };
        evaluate_sites(predictor, &tests)?
    } else {
        let clf = Classifier::<f64>::load(&run.join(CLASSIFIER_FILE))?;
        if clf.spec().n != dataset.n {
            return Err(Error::dim(format!(
                "classifier expects n = {} but the dataset has n = {}",
                clf.spec().n,
                dataset.n
            )));
        }
        evaluate_sites(Predictor::Single(&clf), &tests)?
    };
    let report = MetricsReport::new(&cfg, sites);
    report.write(run)?;
    write_json(
        &run.join(TIMING_FILE),
        &serde_json::json!({ "eval_seconds": start.elapsed().as_secs_f64() }),
    )?;
    Ok(report)
}

/// Runs the ablation grid for `seeds` consecutive seeds from `cfg.seed`.
pub fn cmd_ablate(cfg: &ExperimentConfig, seeds: usize, out: &Path) -> Result<AblationSummary> {
    let base = cfg.clone().resolved();
    base.validate()?;
    create_dir(out)?;
    let seed_list: Vec<u64> = (0..seeds as u64).map(|i| base.seed + i).collect();
    let mut grids = Vec::with_capacity(seeds);
    for &seed in &seed_list {
        let start = Instant::now();
        let mut cfg = base.clone();
        cfg.set_seed(seed);
        let data = load_dataset(&cfg)?;
        let n_groups = data
            .sites
            .iter()
            .flat_map(|s| s.samples.iter().map(|x| x.subtype))
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        let grid = run_ablation::<f64>(
            &data,
            &AblationConfig {
                federation: cfg.federation(data.n)?,
                test_fraction: cfg.test_fraction,
                classifier_specs: cfg.classifier_specs(data.n, n_groups)?,
            },
        )?;
        write_grid(&out.join(format!("ablation_seed{seed}.csv")), &grid)?;
        log::info!(
            "seed {seed}: averages {:?} in {:.1}s",
            grid.cells.iter().map(|c| (c.average * 1e4).round() / 1e4).collect::<Vec<_>>(),
            start.elapsed().as_secs_f64()
        );
        grids.push(grid);
    }
    let summary = summarize(&seed_list, grids)?;
    summary.write(out)?;
    write_json(&out.join("config.json"), &base)?;
    Ok(summary)
}
