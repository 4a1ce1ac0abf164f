use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use aaa_core::dataset::{DatasetSpec, DEFAULT_TEST_FRACTION, DESK_ROIS};
use aaa_core::federation::{FederationConfig, InferenceOptions};
use aaa_core::models::{AutoencoderSpec, ClassifierSpec, ClassifierVariant, TrainConfig};
use aaa_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_SCALE: usize = 16;
pub const DEFAULT_AE_HIDDEN: usize = 64;
pub const DEFAULT_LATENT: usize = 16;
pub const DEFAULT_AE_EPOCHS: usize = 3;
pub const DEFAULT_CLASSIFIER_EPOCHS: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Attention-weighted fusion of site experts.
    #[default]
    Aaa,
    /// The most similar site's expert alone.
    HardSelect,
    /// One federated-averaged classifier.
    Fedavg,
    /// One classifier trained on the union of all training data.
    PooledSingle,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Aaa, Mode::HardSelect, Mode::Fedavg, Mode::PooledSingle];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Aaa => "aaa",
            Mode::HardSelect => "hard-select",
            Mode::Fedavg => "fedavg",
            Mode::PooledSingle => "pooled-single",
        }
    }

    /// Modes that train and load a site bundle.
    pub fn uses_bundle(self) -> bool {
        matches!(self, Mode::Aaa | Mode::HardSelect)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}; expected aaa, hard-select, fedavg or pooled-single")))
    }
}

/// Which classifier each site trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierSetting {
    /// CNN-1 to CNN-4, cycled over sites in id order.
    Heterogeneous,
    /// CNN-1 everywhere.
    Homogeneous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    Generate(DatasetSpec),
    Path(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mode: Mode,
    pub dataset: DatasetSource,
    pub test_fraction: f64,
    /// Autoencoder rounds (Stage I) or FedAvg rounds.
    pub rounds: usize,
    pub autoencoder_epochs: usize,
    pub classifier_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub autoencoder_hidden: usize,
    pub latent_dim: usize,
    /// Classifier width divisor; 1 is full size.
    pub scale: usize,
    /// Defaults to heterogeneous for bundle modes and homogeneous otherwise.
    pub classifiers: Option<ClassifierSetting>,
    pub inference: InferenceOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mode: Mode::Aaa,
            dataset: DatasetSource::Generate(DatasetSpec::default_layout(DESK_ROIS, 0)),
            test_fraction: DEFAULT_TEST_FRACTION,
            rounds: 1,
            autoencoder_epochs: DEFAULT_AE_EPOCHS,
            classifier_epochs: DEFAULT_CLASSIFIER_EPOCHS,
            lr: 1e-3,
            batch_size: 1,
            autoencoder_hidden: DEFAULT_AE_HIDDEN,
            latent_dim: DEFAULT_LATENT,
            scale: DEFAULT_SCALE,
            classifiers: None,
            inference: InferenceOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }

    /// Sets the run seed, and the generator seed when data is generated.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let DatasetSource::Generate(spec) = &mut self.dataset {
            spec.seed = seed;
        }
    }

    /// Fills every defaulted choice so the config can be embedded verbatim.
    pub fn resolved(mut self) -> Self {
        if self.classifiers.is_none() {
            self.classifiers = Some(if self.mode.uses_bundle() {
                ClassifierSetting::Heterogeneous
            } else {
                ClassifierSetting::Homogeneous
            });
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 {
            return Err(Error::Config("scale must be at least 1".into()));
        }
        if let DatasetSource::Generate(spec) = &self.dataset {
            spec.validate()?;
        }
        self.federation(DESK_ROIS).map(|_| ())
    }

    pub fn train_config(&self, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            lr: self.lr,
            batch_size: self.batch_size,
        }
    }

    pub fn autoencoder_spec(&self, n: usize) -> AutoencoderSpec {
        AutoencoderSpec {
            hidden_dim: self.autoencoder_hidden,
            latent_dim: self.latent_dim,
            ..AutoencoderSpec::for_rois(n)
        }
    }

    pub fn federation(&self, n: usize) -> Result<FederationConfig> {
        let cfg = FederationConfig {
            seed: self.seed,
            rounds: self.rounds,
            autoencoder: self.autoencoder_spec(n),
            autoencoder_train: self.train_config(self.autoencoder_epochs),
            classifier_train: self.train_config(self.classifier_epochs),
            autoencoder_epochs_by_round: Vec::new(),
            inference: self.inference,
            parallel: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Classifier specs for `sites` clients in id order.
    pub fn classifier_specs(&self, n: usize, sites: usize) -> Result<Vec<ClassifierSpec>> {
        let set = match self.classifiers.unwrap_or(ClassifierSetting::Heterogeneous) {
            ClassifierSetting::Heterogeneous => ClassifierSpec::heterogeneous_set(n, self.scale)?,
            ClassifierSetting::Homogeneous => vec![ClassifierSpec::desk_scale(ClassifierVariant::Cnn1, n, self.scale)?],
        };
        Ok((0..sites).map(|i| set[i % set.len()]).collect())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub rounds: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub scale: Option<usize>,
    pub n: Option<usize>,
    pub data: Option<PathBuf>,
    pub null_effects: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(p) = &self.data {
            cfg.dataset = DatasetSource::Path(p.clone());
        }
        if let Some(n) = self.n {
            if let DatasetSource::Generate(spec) = &mut cfg.dataset {
                spec.n = n;
            }
        }
        if self.null_effects {
            if let DatasetSource::Generate(spec) = &mut cfg.dataset {
                *spec = spec.clone().with_null_effects();
            }
        }
        if let Some(s) = self.seed {
            cfg.set_seed(s);
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(r) = self.rounds {
            cfg.rounds = r;
        }
        if let Some(e) = self.epochs {
            cfg.autoencoder_epochs = e;
            cfg.classifier_epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        if let Some(s) = self.scale {
            cfg.scale = s;
        }
    }
}
