use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::dataset::spec::{Dataset, DatasetSpec, FcSample, SiteSamples, SiteSpec, SubtypeSupport, LABEL_MDD, LABEL_NC};
use crate::dataset::vectorize::{upper_tri_len, upper_tri_unflatten};
use crate::error::{Error, Result};
use crate::seed::{rng_for, stream};
use crate::tensor::Tensor;

/// A sparse ±1 pattern over a fraction of the edges.
fn edge_mask(d: usize, fraction: f64, seed: u64, path: &[u64]) -> Vec<f64> {
    edge_mask_split(d, fraction, seed, path, path)
}

/// Edge set drawn from `support_path`, signs from `sign_path`.
fn edge_mask_split(d: usize, fraction: f64, seed: u64, support_path: &[u64], sign_path: &[u64]) -> Vec<f64> {
    let k = ((fraction * d as f64).round() as usize).clamp(1, d);
    let mut support = sample_indices(&mut rng_for(seed, support_path), d, k).into_vec();
    support.sort_unstable();
    let mut signs = rng_for(seed, &[sign_path, &[stream::SIGNS]].concat());
    let mut mask = vec![0.0; d];
    for i in support {
        mask[i] = if signs.random::<bool>() { 1.0 } else { -1.0 };
    }
    mask
}

fn base_pattern(d: usize, strength: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, &[stream::BASE_PATTERN]);
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            strength * z
        })
        .collect()
}

/// The noiseless mean edge vector of each label at a site, before squashing.
struct SiteMeans {
    nc: Vec<f64>,
    mdd: Vec<f64>,
}

fn site_means(site: &SiteSpec, global: &DatasetSpec) -> SiteMeans {
    let d = upper_tri_len(global.n);
    let base = base_pattern(d, global.base_strength, global.seed);
    let site_mask = edge_mask(d, global.mask_fraction, global.seed, &[stream::SITE_MASK, site.site_id as u64]);
    let subtype_path = [stream::SUBTYPE_MASK, site.subtype as u64];
    let subtype_mask = match global.subtype_support {
        SubtypeSupport::Shared => {
            edge_mask_split(d, global.mask_fraction, global.seed, &[stream::SUBTYPE_MASK], &subtype_path)
        }
        SubtypeSupport::Independent => edge_mask(d, global.mask_fraction, global.seed, &subtype_path),
    };
    let label_mask = edge_mask(d, global.mask_fraction, global.seed, &[stream::LABEL_MASK]);
    let centre: Vec<f64> = (0..d).map(|e| base[e] + site.site_effect * site_mask[e]).collect();
    let half = 0.5 * site.subtype_effect;
    let nc: Vec<f64> = (0..d).map(|e| centre[e] - half * subtype_mask[e]).collect();
    let mdd = (0..d)
        .map(|e| centre[e] + half * subtype_mask[e] + site.label_effect * label_mask[e])
        .collect();
    SiteMeans { nc, mdd }
}

/// Samples of one site: the first `n_mdd` are MDD, the rest NC.
/// Sample `i` depends only on `(global.seed, site_id, i)`.
pub fn generate_site(site: &SiteSpec, global: &DatasetSpec) -> Result<Vec<FcSample>> {
    site.validate()?;
    global.validate()?;
    let means = site_means(site, global);
    let noise = Normal::new(0.0, site.noise_sd)
        .map_err(|e| Error::Config(format!("site {}: {e}", site.site_id)))?;
    (0..site.total())
        .map(|i| {
            let label = if i < site.n_mdd { LABEL_MDD } else { LABEL_NC };
            let mean = if label == LABEL_MDD { &means.mdd } else { &means.nc };
            let mut rng = rng_for(global.seed, &[stream::SAMPLE, site.site_id as u64, i as u64]);
            let edges: Vec<f64> = mean
                .iter()
                .map(|&m| (m + noise.sample(&mut rng)).tanh())
                .collect();
            Ok(FcSample {
                matrix: upper_tri_unflatten(&Tensor::vector(edges), global.n)?,
                label,
                subtype: site.subtype,
                site_id: site.site_id,
            })
        })
        .collect()
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let sites = spec
        .sites
        .par_iter()
        .map(|site| {
            Ok(SiteSamples {
                site_id: site.site_id,
                samples: generate_site(site, spec)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        n: spec.n,
        seed: spec.seed,
        sites,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::vectorize::upper_tri_flatten;

    fn quiet(n: usize) -> DatasetSpec {
        let mut spec = DatasetSpec::default_layout(n, 11);
        for s in &mut spec.sites {
            s.n_mdd = 3;
            s.n_nc = 3;
            s.site_effect = 0.0;
            s.subtype_effect = 0.0;
            s.label_effect = 0.0;
            s.noise_sd = 0.0;
        }
        spec
    }

    #[test]
    fn degenerate_generator_repeats_the_base_pattern() {
        let spec = quiet(8);
        let data = generate_dataset(&spec).unwrap();
        let first = &data.sites[0].samples[0].matrix;
        for site in &data.sites {
            for s in &site.samples {
                assert_eq!(&s.matrix, first);
            }
        }
    }

    #[test]
    fn strong_label_effect_is_separable_on_a_mask_edge() {
        let mut spec = quiet(10);
        let site = &mut spec.sites[0];
        site.n_mdd = 40;
        site.n_nc = 40;
        site.label_effect = 3.0;
        site.noise_sd = 0.3;
        let samples = generate_site(&spec.sites[0], &spec).unwrap();
        let d = upper_tri_len(10);
        let mask = edge_mask(d, spec.mask_fraction, spec.seed, &[stream::LABEL_MASK]);
        let e = mask.iter().position(|&m| m != 0.0).unwrap();
        let sign = mask[e];
        let base = base_pattern(d, spec.base_strength, spec.seed)[e];
        let threshold = (base + 1.5 * sign).tanh();
        for s in &samples {
            let v = upper_tri_flatten(&s.matrix).unwrap().data()[e];
            let says_mdd = if sign > 0.0 { v > threshold } else { v < threshold };
            assert_eq!(says_mdd, s.label == LABEL_MDD);
        }
    }

    #[test]
    fn matrices_are_valid_correlations() {
        let spec = DatasetSpec::default_layout(12, 5);
        let s = &spec.sites[2];
        let site = SiteSpec {
            n_mdd: 5,
            n_nc: 5,
            ..s.clone()
        };
        for x in generate_site(&site, &spec).unwrap() {
            let n = x.n();
            for i in 0..n {
                assert_eq!(x.matrix.at2(i, i), 1.0);
                for j in 0..n {
                    assert!(x.matrix.at2(i, j).abs() <= 1.0);
                    assert_eq!(x.matrix.at2(i, j), x.matrix.at2(j, i));
                }
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let mut spec = DatasetSpec::default_layout(8, 3);
        for s in &mut spec.sites {
            s.n_mdd = 4;
            s.n_nc = 2;
        }
        assert_eq!(generate_dataset(&spec).unwrap(), generate_dataset(&spec).unwrap());
        let mut other = spec.clone();
        other.seed = 4;
        assert_ne!(generate_dataset(&spec).unwrap(), generate_dataset(&other).unwrap());
    }

    #[test]
    fn default_layout_totals() {
        let spec = DatasetSpec::default_layout(32, 0);
        assert_eq!(spec.total_samples(), 1350);
        let sizes: Vec<usize> = spec.sites.iter().map(SiteSpec::total).collect();
        assert_eq!(sizes, [152, 242, 636, 320]);
    }

    #[test]
    fn labels_come_mdd_first() {
        let spec = quiet(6);
        let s = generate_site(&spec.sites[1], &spec).unwrap();
        let labels: Vec<u8> = s.iter().map(|x| x.label).collect();
        assert_eq!(labels, [1, 1, 1, 0, 0, 0]);
    }
}
