use crate::error::{Error, Result};
use crate::federation::payload::SitePayload;
use crate::nn::ParamSet;
use crate::scalar::Scalar;

/// Sample-count weights `|D_s| / Σ|D_k|`.
pub fn site_weights(counts: &[usize]) -> Result<Vec<f64>> {
    if counts.is_empty() {
        return Err(Error::Protocol("no sites to weight".into()));
    }
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Protocol(format!("site at position {i} reports zero samples")));
    }
    let total: usize = counts.iter().sum();
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Weighted average of structurally identical parameter sets.
///
/// Computed as `θ₁ + Σ w_s (θ_s − θ₁)`, which equals `Σ w_s θ_s` when the
/// weights sum to one and returns shared parameters bit-exactly.
pub fn weighted_average<T: Scalar>(sets: &[&ParamSet<T>], weights: &[f64]) -> Result<ParamSet<T>> {
    let (first, rest) = sets
        .split_first()
        .ok_or_else(|| Error::Protocol("nothing to aggregate".into()))?;
    if sets.len() != weights.len() {
        return Err(Error::Protocol(format!(
            "{} parameter sets but {} weights",
            sets.len(),
            weights.len()
        )));
    }
    for (i, s) in rest.iter().enumerate() {
        first.require_structure(s, &format!("aggregating site position {}", i + 1))?;
    }
    let mut out = (*first).clone();
    for (ti, tensor) in out.tensors_mut().iter_mut().enumerate() {
        let base = first.tensors()[ti].data();
        for (s, &w) in sets.iter().zip(weights).skip(1) {
            let w = T::lit(w);
            for ((o, &b), &v) in tensor.data_mut().iter_mut().zip(base).zip(s.tensors()[ti].data()) {
                *o += w * (v - b);
            }
        }
    }
    Ok(out)
}

/// Server-side autoencoder aggregation over uploaded payloads.
pub fn aggregate_autoencoders<T: Scalar>(payloads: &[SitePayload<T>]) -> Result<ParamSet<T>> {
    let counts: Vec<usize> = payloads.iter().map(|p| p.sample_count).collect();
    let weights = site_weights(&counts)?;
    let sets: Vec<&ParamSet<T>> = payloads.iter().map(|p| &p.autoencoder).collect();
    weighted_average(&sets, &weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use crate::tensor::Tensor;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_set(seed: u64) -> ParamSet<f64> {
        let mut r = rng_for(seed, &[]);
        let mut t = |shape: &[usize]| {
            let len = shape.iter().product();
            Tensor::new(shape.to_vec(), (0..len).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap()
        };
        ParamSet::new(vec![t(&[3, 4]), t(&[3]), t(&[2, 3, 5]), t(&[2])])
    }

    #[test]
    fn paper_site_sizes() {
        let w = site_weights(&[152, 242, 636, 320]).unwrap();
        let expect = [152.0 / 1350.0, 242.0 / 1350.0, 636.0 / 1350.0, 320.0 / 1350.0];
        assert_eq!(w, expect);
        assert_eq!(site_weights(&[10, 10]).unwrap(), [0.5, 0.5]);
        assert_eq!(site_weights(&[7]).unwrap(), [1.0]);
        assert!(matches!(site_weights(&[]), Err(Error::Protocol(_))));
        assert!(matches!(site_weights(&[3, 0]), Err(Error::Protocol(_))));
    }

    #[test]
    fn identical_inputs_are_a_fixed_point() {
        let p = random_set(1);
        let w = site_weights(&[152, 242, 636, 320]).unwrap();
        assert_eq!(weighted_average(&[&p, &p, &p, &p], &w).unwrap(), p);
    }

    #[test]
    fn opposite_parameters_cancel() {
        let p = random_set(2);
        let neg = ParamSet::new(p.tensors().iter().map(|t| t.scale(-1.0)).collect());
        let avg = weighted_average(&[&p, &neg], &[0.5, 0.5]).unwrap();
        assert!(avg.tensors().iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_site_is_identity() {
        let p = random_set(3);
        assert_eq!(weighted_average(&[&p], &[1.0]).unwrap(), p);
    }

    #[test]
    fn four_sites_match_loop_oracle() {
        let sets: Vec<ParamSet<f64>> = (10..14).map(random_set).collect();
        let counts = [152usize, 242, 636, 320];
        let avg = weighted_average(&sets.iter().collect::<Vec<_>>(), &site_weights(&counts).unwrap()).unwrap();
        for ti in 0..4 {
            for k in 0..sets[0].tensors()[ti].len() {
                let mut acc = 0.0;
                for (s, &c) in sets.iter().zip(&counts) {
                    acc += c as f64 / 1350.0 * s.tensors()[ti].data()[k];
                }
                assert!((avg.tensors()[ti].data()[k] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_a_homogeneity_violation() {
        let a = random_set(1);
        let b = ParamSet::new(a.tensors()[..3].to_vec());
        assert!(matches!(weighted_average(&[&a, &b], &[0.5, 0.5]), Err(Error::Homogeneity(_))));
    }

    proptest! {
        #[test]
        fn equal_counts_give_the_arithmetic_mean(seeds in prop::collection::vec(any::<u64>(), 1..6)) {
            let sets: Vec<ParamSet<f64>> = seeds.iter().map(|&s| random_set(s)).collect();
            let w = site_weights(&vec![5; sets.len()]).unwrap();
            let avg = weighted_average(&sets.iter().collect::<Vec<_>>(), &w).unwrap();
            let k = sets.len() as f64;
            for ti in 0..4 {
                for i in 0..sets[0].tensors()[ti].len() {
                    let mean = sets.iter().map(|s| s.tensors()[ti].data()[i]).sum::<f64>() / k;
                    prop_assert!((avg.tensors()[ti].data()[i] - mean).abs() <= 1e-12);
                }
            }
        }
    }
}
