use serde::{Deserialize, Serialize};

use crate::dataset::vectorize::{upper_tri_flatten, upper_tri_len};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const LABEL_NC: u8 = 0;
pub const LABEL_MDD: u8 = 1;

/// Subtype tag meaning "not stratified".
pub const UNTAGGED_SUBTYPE: u8 = 0;

pub const DESK_ROIS: usize = 32;
pub const PAPER_ROIS: usize = 116;

/// Per-site patient counts (MDD, NC) of the four clinical subgroups.
pub const DEFAULT_SITE_COUNTS: [(usize, usize); 4] = [(76, 76), (121, 121), (318, 318), (160, 160)];

pub const DEFAULT_SITE_EFFECT: f64 = 1.0;
pub const DEFAULT_SUBTYPE_EFFECT: f64 = 0.6;
pub const DEFAULT_LABEL_EFFECT: f64 = 0.15;
pub const DEFAULT_NOISE_SD: f64 = 0.5;
pub const DEFAULT_BASE_STRENGTH: f64 = 0.0;
pub const DEFAULT_MASK_FRACTION: f64 = 0.1;

/// Generator parameters of one site.
///
/// `site_effect` shifts every sample at the site (acquisition differences).
/// `subtype_effect` separates the site's two labels around the site centre:
/// NC sits half the subtype pattern below it and MDD half above, so the
/// subtype decides how the disorder presents.
/// `label_effect` is the diagnosis pattern common to all subgroups; its mask
/// is shared across sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteSpec {
    pub site_id: u16,
    pub subtype: u8,
    pub n_mdd: usize,
    pub n_nc: usize,
    pub site_effect: f64,
    pub subtype_effect: f64,
    pub label_effect: f64,
    pub noise_sd: f64,
}

impl SiteSpec {
    pub fn total(&self) -> usize {
        self.n_mdd + self.n_nc
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_mdd == 0 || self.n_nc == 0 {
            return Err(Error::Config(format!(
                "site {} needs at least one sample of each label (MDD {}, NC {})",
                self.site_id, self.n_mdd, self.n_nc
            )));
        }
        for (name, v) in [
            ("site_effect", self.site_effect),
            ("subtype_effect", self.subtype_effect),
            ("label_effect", self.label_effect),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("site {}: {name} = {v}", self.site_id)));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Config(format!(
                "site {}: noise_sd must be finite and non-negative, got {}",
                self.site_id, self.noise_sd
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    /// ROI count; matrices are `n × n`.
    pub n: usize,
    pub seed: u64,
    pub sites: Vec<SiteSpec>,
    #[serde(default = "default_base_strength")]
    pub base_strength: f64,
    #[serde(default = "default_mask_fraction")]
    pub mask_fraction: f64,
    #[serde(default)]
    pub subtype_support: SubtypeSupport,
}

/// Edge sets of the subtype masks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubtypeSupport {
    /// One edge set for every subtype, with subtype-specific signs: the
    /// same connections are altered, in different directions.
    #[default]
    Shared,
    /// A separate random edge set per subtype.
    Independent,
}

fn default_base_strength() -> f64 {
    DEFAULT_BASE_STRENGTH
}

fn default_mask_fraction() -> f64 {
    DEFAULT_MASK_FRACTION
}

impl DatasetSpec {
    /// Four sites with the clinical-subgroup sizes, one subtype per site.
    pub fn default_layout(n: usize, seed: u64) -> Self {
        let sites = DEFAULT_SITE_COUNTS
            .iter()
            .enumerate()
            .map(|(i, &(n_mdd, n_nc))| SiteSpec {
                site_id: i as u16 + 1,
                subtype: i as u8 + 1,
                n_mdd,
                n_nc,
                site_effect: DEFAULT_SITE_EFFECT,
                subtype_effect: DEFAULT_SUBTYPE_EFFECT,
                label_effect: DEFAULT_LABEL_EFFECT,
                noise_sd: DEFAULT_NOISE_SD,
            })
            .collect();
        Self {
            n,
            seed,
            sites,
            base_strength: DEFAULT_BASE_STRENGTH,
            mask_fraction: DEFAULT_MASK_FRACTION,
            subtype_support: SubtypeSupport::default(),
        }
    }

    /// Same layout with site and subtype effects switched off.
    pub fn with_null_effects(mut self) -> Self {
        for s in &mut self.sites {
            s.site_effect = 0.0;
            s.subtype_effect = 0.0;
        }
        self
    }

    pub fn edge_count(&self) -> usize {
        upper_tri_len(self.n)
    }

    pub fn total_samples(&self) -> usize {
        self.sites.iter().map(SiteSpec::total).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::Config(format!("need n >= 4 ROIs, got {}", self.n)));
        }
        if self.n > u32::MAX as usize {
            return Err(Error::Config(format!("n = {} too large", self.n)));
        }
        if !(self.mask_fraction > 0.0 && self.mask_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "mask_fraction must be in (0, 1], got {}",
                self.mask_fraction
            )));
        }
        if !self.base_strength.is_finite() {
            return Err(Error::Config("base_strength must be finite".into()));
        }
        let mut ids: Vec<u16> = self.sites.iter().map(|s| s.site_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate site ids in {ids:?}")));
        }
        self.sites.iter().try_for_each(SiteSpec::validate)
    }
}

/// One subject: an FC matrix with diagnosis and stratification tags.
#[derive(Clone, Debug, PartialEq)]
pub struct FcSample {
    pub matrix: Tensor<f64>,
    /// 1 = MDD, 0 = NC.
    pub label: u8,
    pub subtype: u8,
    pub site_id: u16,
}

impl FcSample {
    pub fn n(&self) -> usize {
        self.matrix.shape()[0]
    }

    /// Converts to the working scalar type and precomputes the
    /// upper-triangle vector the autoencoder consumes.
    pub fn prepare<T: Scalar>(&self) -> Result<PreparedSample<T>> {
        let matrix = self.matrix.cast::<T>();
        let vector = upper_tri_flatten(&matrix)?;
        Ok(PreparedSample {
            matrix,
            vector,
            label: self.label,
            subtype: self.subtype,
            site_id: self.site_id,
        })
    }
}

/// A sample in model-ready form.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSample<T> {
    /// `[n, n]`
    pub matrix: Tensor<T>,
    /// Strict upper triangle of `matrix`.
    pub vector: Tensor<T>,
    pub label: u8,
    pub subtype: u8,
    pub site_id: u16,
}

pub fn prepare_all<T: Scalar>(samples: &[FcSample]) -> Result<Vec<PreparedSample<T>>> {
    samples.iter().map(FcSample::prepare).collect()
}

/// Samples grouped by site.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteSamples {
    pub site_id: u16,
    pub samples: Vec<FcSample>,
}

impl SiteSamples {
    pub fn count_label(&self, label: u8) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub seed: u64,
    pub sites: Vec<SiteSamples>,
}

impl Dataset {
    pub fn total_samples(&self) -> usize {
        self.sites.iter().map(|s| s.samples.len()).sum()
    }

    pub fn site(&self, site_id: u16) -> Option<&SiteSamples> {
        self.sites.iter().find(|s| s.site_id == site_id)
    }
}
