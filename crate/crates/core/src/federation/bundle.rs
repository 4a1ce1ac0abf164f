use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::aggregate::site_weights;
use crate::federation::payload::SitePayload;
use crate::models::{Autoencoder, AutoencoderSpec, ClassTemplate, Classifier, ClassifierSpec, TemplatePair};
use crate::nn::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BUNDLE_MANIFEST: &str = "bundle.json";
pub const BUNDLE_AUTOENCODER: &str = "autoencoder.ckpt";
pub const BUNDLE_TEMPLATES: &str = "templates.bin";
pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// Which encoder produces the latent code compared against site templates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderMode {
    /// The aggregated autoencoder the server distributes.
    #[default]
    Global,
    /// Each site's own final-round encoder, against that site's templates.
    PerSite,
}

/// Space in which site outputs are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionSpace {
    #[default]
    Logits,
    Probabilities,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceOptions {
    #[serde(default)]
    pub encoder: EncoderMode,
    #[serde(default)]
    pub fusion: FusionSpace,
}

/// One site's contribution to the bundle.
#[derive(Clone, Debug)]
pub struct SiteExpert<T> {
    pub site_id: u16,
    pub sample_count: usize,
    pub weight: f64,
    pub classifier: Classifier<T>,
    pub templates: TemplatePair<T>,
    /// Final-round local autoencoder, kept for [`EncoderMode::PerSite`].
    pub local_autoencoder: Option<Autoencoder<T>>,
}

/// What the server redistributes after Stage I.
#[derive(Clone, Debug)]
pub struct GlobalBundle<T> {
    pub autoencoder: Autoencoder<T>,
    /// Ordered by ascending site id.
    pub sites: Vec<SiteExpert<T>>,
    pub options: InferenceOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleSiteEntry {
    pub site_id: u16,
    pub sample_count: usize,
    pub weight: f64,
    pub classifier: ClassifierSpec,
    pub classifier_file: String,
    #[serde(default)]
    pub local_autoencoder_file: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format_version: u32,
    pub autoencoder: AutoencoderSpec,
    pub options: InferenceOptions,
    pub config_fingerprint: String,
    pub sites: Vec<BundleSiteEntry>,
}

impl<T: Scalar> GlobalBundle<T> {
    /// Server-side assembly from the aggregated autoencoder and payloads.
    pub fn assemble(
        spec: AutoencoderSpec,
        global: &ParamSet<T>,
        payloads: &[SitePayload<T>],
        options: InferenceOptions,
    ) -> Result<Self> {
        let autoencoder = Autoencoder::from_snapshot(spec, global)?;
        let counts: Vec<usize> = payloads.iter().map(|p| p.sample_count).collect();
        let weights = site_weights(&counts)?;
        let mut sites = payloads
            .iter()
            .zip(weights)
            .map(|(p, weight)| {
                p.validate()?;
                Ok(SiteExpert {
                    site_id: p.site_id,
                    sample_count: p.sample_count,
                    weight,
                    classifier: Classifier::from_snapshot(p.classifier_spec, &p.classifier)?,
                    templates: p.templates.clone(),
                    local_autoencoder: match options.encoder {
                        EncoderMode::PerSite => Some(Autoencoder::from_snapshot(spec, &p.autoencoder)?),
                        EncoderMode::Global => None,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sites.sort_by_key(|s| s.site_id);
        let bundle = Self {
            autoencoder,
            sites,
            options,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn site_ids(&self) -> Vec<u16> {
        self.sites.iter().map(|s| s.site_id).collect()
    }

    pub fn latent_dim(&self) -> usize {
        self.autoencoder.spec().latent_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites.is_empty() {
            return Err(Error::Protocol("bundle has no sites".into()));
        }
        if self.sites.windows(2).any(|w| w[0].site_id >= w[1].site_id) {
            return Err(Error::Protocol(format!(
                "bundle site ids must be unique and ascending, got {:?}",
                self.site_ids()
            )));
        }
        let sum: f64 = self.sites.iter().map(|s| s.weight).sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Protocol(format!("site weights sum to {sum}")));
        }
        let l = self.latent_dim();
        for s in &self.sites {
            for t in s.templates.iter() {
                if t.vector.shape() != [l] || t.site_id != s.site_id {
                    return Err(Error::Homogeneity(format!(
                        "site {} template {:?} for site {} does not fit latent dim {l}",
                        s.site_id,
                        t.vector.shape(),
                        t.site_id
                    )));
                }
            }
            if self.options.encoder == EncoderMode::PerSite && s.local_autoencoder.is_none() {
                return Err(Error::Config(format!(
                    "per-site encoding needs site {}'s local autoencoder",
                    s.site_id
                )));
            }
        }
        Ok(())
    }

    /// Writes the bundle directory.
    pub fn save(&self, dir: &Path, config_fingerprint: &str) -> Result<BundleManifest> {
        self.validate()?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.autoencoder.save(&dir.join(BUNDLE_AUTOENCODER))?;
        let l = self.latent_dim();
        let mut entries = Vec::with_capacity(self.sites.len());
        let mut templates = Vec::with_capacity(self.sites.len() * 2 * l);
        for s in &self.sites {
            let classifier_file = format!("site{}.classifier.ckpt", s.site_id);
            s.classifier.save(&dir.join(&classifier_file))?;
            let local_autoencoder_file = match &s.local_autoencoder {
                Some(ae) => {
                    let f = format!("site{}.autoencoder.ckpt", s.site_id);
                    ae.save(&dir.join(&f))?;
                    Some(f)
                }
                None => None,
            };
            templates.extend_from_slice(s.templates.nc.vector.data());
            templates.extend_from_slice(s.templates.mdd.vector.data());
            entries.push(BundleSiteEntry {
                site_id: s.site_id,
                sample_count: s.sample_count,
                weight: s.weight,
                classifier: *s.classifier.spec(),
                classifier_file,
                local_autoencoder_file,
            });
        }
        let t = Tensor::new(vec![self.sites.len(), 2, l], templates)?;
        let path = dir.join(BUNDLE_TEMPLATES);
        std::fs::write(&path, t.to_bytes()).map_err(|e| Error::io(&path, e))?;
        let manifest = BundleManifest {
            format_version: BUNDLE_FORMAT_VERSION,
            autoencoder: *self.autoencoder.spec(),
            options: self.options,
            config_fingerprint: config_fingerprint.to_string(),
            sites: entries,
        };
        let path = dir.join(BUNDLE_MANIFEST);
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
            path: path.clone(),
            source: e,
        })?;
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<(Self, BundleManifest)> {
        let path = dir.join(BUNDLE_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: BundleManifest =
            serde_json::from_str(&text).map_err(|e| Error::Json { path, source: e })?;
        if manifest.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::Manifest(format!(
                "bundle format {} is not supported",
                manifest.format_version
            )));
        }
        let autoencoder = Autoencoder::<f64>::load(&dir.join(BUNDLE_AUTOENCODER))?;
        if autoencoder.spec() != &manifest.autoencoder {
            return Err(Error::Manifest("autoencoder checkpoint disagrees with bundle.json".into()));
        }
        let tpath = dir.join(BUNDLE_TEMPLATES);
        let tbytes = std::fs::read(&tpath).map_err(|e| Error::io(&tpath, e))?;
        let templates = Tensor::<f64>::from_bytes(&tbytes)?;
        let (n_sites, l) = (manifest.sites.len(), manifest.autoencoder.latent_dim);
        if templates.shape() != [n_sites, 2, l] {
            return Err(Error::Manifest(format!(
                "templates.bin has shape {:?}, expected [{n_sites}, 2, {l}]",
                templates.shape()
            )));
        }
        // Weights are recomputed from counts so they round-trip exactly.
        let counts: Vec<usize> = manifest.sites.iter().map(|s| s.sample_count).collect();
        let weights = site_weights(&counts)?;
        let mut sites = Vec::with_capacity(n_sites);
        for (i, (entry, weight)) in manifest.sites.iter().zip(weights).enumerate() {
            if (entry.weight - weight).abs() > 1e-12 {
                return Err(Error::Manifest(format!(
                    "site {} weight {} does not match its sample count",
                    entry.site_id, entry.weight
                )));
            }
            let classifier = Classifier::<f64>::load(&dir.join(&entry.classifier_file))?;
            if classifier.spec() != &entry.classifier {
                return Err(Error::Manifest(format!(
                    "site {} classifier checkpoint disagrees with bundle.json",
                    entry.site_id
                )));
            }
            let row = |label: usize| {
                let start = (i * 2 + label) * l;
                Tensor::vector(templates.data()[start..start + l].iter().map(|&v| T::lit(v)).collect())
            };
            let template = |label: usize| ClassTemplate {
                site_id: entry.site_id,
                label: label as u8,
                vector: row(label),
            };
            let local_autoencoder = match &entry.local_autoencoder_file {
                Some(f) => Some(cast_autoencoder(&Autoencoder::<f64>::load(&dir.join(f))?)?),
                None => None,
            };
            sites.push(SiteExpert {
                site_id: entry.site_id,
                sample_count: entry.sample_count,
                weight,
                classifier: Classifier::from_snapshot(*classifier.spec(), &cast_params(&classifier.snapshot()))?,
                templates: TemplatePair {
                    nc: template(0),
                    mdd: template(1),
                },
                local_autoencoder,
            });
        }
        let bundle = Self {
            autoencoder: cast_autoencoder(&autoencoder)?,
            sites,
            options: manifest.options,
        };
        bundle.validate()?;
        Ok((bundle, manifest))
    }
}

fn cast_params<T: Scalar>(p: &ParamSet<f64>) -> ParamSet<T> {
    ParamSet::new(p.tensors().iter().map(Tensor::cast).collect())
}

fn cast_autoencoder<T: Scalar>(ae: &Autoencoder<f64>) -> Result<Autoencoder<T>> {
    Autoencoder::from_snapshot(*ae.spec(), &cast_params(&ae.snapshot()))
}
