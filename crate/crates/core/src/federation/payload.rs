use crate::codec;
use crate::error::{Error, Result};
use crate::models::{ClassifierSpec, TemplatePair};
use crate::nn::ParamSet;
use crate::scalar::Scalar;

/// Everything a client sends to the server. Sample data never appears
/// here; only parameters, the two templates and a count.
#[derive(Clone, Debug)]
pub struct SitePayload<T> {
    pub site_id: u16,
    pub autoencoder: ParamSet<T>,
    pub classifier_spec: ClassifierSpec,
    pub classifier: ParamSet<T>,
    pub templates: TemplatePair<T>,
    pub sample_count: usize,
}

impl<T: Scalar> SitePayload<T> {
    pub fn validate(&self) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::Protocol(format!("site {} uploaded zero samples", self.site_id)));
        }
        if self.templates.nc.vector.shape() != self.templates.mdd.vector.shape() {
            return Err(Error::Homogeneity(format!(
                "site {} templates have different shapes",
                self.site_id
            )));
        }
        Ok(())
    }

    /// Wire form, as the server would receive it.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        codec::put_u16(&mut out, self.site_id);
        codec::put_u64(&mut out, self.sample_count as u64);
        let spec = serde_json::to_vec(&self.classifier_spec)
            .map_err(|e| Error::Protocol(format!("encoding classifier spec: {e}")))?;
        codec::put_len(&mut out, spec.len())?;
        out.extend_from_slice(&spec);
        self.autoencoder.encode(&mut out)?;
        self.classifier.encode(&mut out)?;
        self.templates.nc.vector.encode(&mut out);
        self.templates.mdd.vector.encode(&mut out);
        Ok(out)
    }
}
