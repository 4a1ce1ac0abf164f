use serde::{Deserialize, Serialize};

use crate::dataset::{LABEL_MDD, LABEL_NC};
use crate::error::{Error, Result};
use crate::models::autoencoder::Autoencoder;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean latent code of one label at one site.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassTemplate<T> {
    pub site_id: u16,
    pub label: u8,
    pub vector: Tensor<T>,
}

/// Both class templates of a site.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplatePair<T> {
    pub nc: ClassTemplate<T>,
    pub mdd: ClassTemplate<T>,
}

impl<T: Scalar> TemplatePair<T> {
    pub fn site_id(&self) -> u16 {
        self.nc.site_id
    }

    pub fn latent_dim(&self) -> usize {
        self.nc.vector.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClassTemplate<T>> {
        [&self.nc, &self.mdd].into_iter()
    }
}

/// Summary of which labels a template pair was built from; serializable
/// for bundle metadata.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateCounts {
    pub nc: usize,
    pub mdd: usize,
}

/// Per-label means of latent codes, `(x, y)` pairs in any order.
pub fn templates_from_codes<'a, T: Scalar>(
    site_id: u16,
    codes: impl IntoIterator<Item = (&'a Tensor<T>, u8)>,
) -> Result<(TemplatePair<T>, TemplateCounts)> {
    let mut sums: [Option<Tensor<T>>; 2] = [None, None];
    let mut counts = [0usize; 2];
    for (code, label) in codes {
        let slot = match label {
            LABEL_NC => 0,
            LABEL_MDD => 1,
            other => return Err(Error::DataIntegrity(format!("label {other} at site {site_id}"))),
        };
        match &mut sums[slot] {
            Some(acc) => acc.add_scaled(code, T::one())?,
            empty => *empty = Some(code.clone()),
        }
        counts[slot] += 1;
    }
    let [nc, mdd] = sums;
    let mean = |sum: Option<Tensor<T>>, count: usize, label: u8| {
        sum.map(|s| ClassTemplate {
            site_id,
            label,
            vector: s.scale(T::one() / T::from_usize(count).expect("count fits")),
        })
        .ok_or(Error::MissingClass { site_id, label })
    };
    let pair = TemplatePair {
        nc: mean(nc, counts[0], LABEL_NC)?,
        mdd: mean(mdd, counts[1], LABEL_MDD)?,
    };
    if pair.nc.vector.shape() != pair.mdd.vector.shape() {
        return Err(Error::dim(format!(
            "site {site_id} latent codes of differing shapes {:?} and {:?}",
            pair.nc.vector.shape(),
            pair.mdd.vector.shape()
        )));
    }
    Ok((
        pair,
        TemplateCounts {
            nc: counts[0],
            mdd: counts[1],
        },
    ))
}

/// Encodes each upper-triangle vector and averages the codes per label.
pub fn compute_templates<'a, T: Scalar>(
    site_id: u16,
    data: impl IntoIterator<Item = (&'a Tensor<T>, u8)>,
    encoder: &Autoencoder<T>,
) -> Result<TemplatePair<T>> {
    let codes = data
        .into_iter()
        .map(|(x, y)| Ok((encoder.encode(x)?, y)))
        .collect::<Result<Vec<_>>>()?;
    templates_from_codes(site_id, codes.iter().map(|(t, y)| (t, *y))).map(|(p, _)| p)
}
