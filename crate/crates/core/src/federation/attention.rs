use crate::dataset::upper_tri_flatten;
use crate::error::{Error, Result};
use crate::federation::bundle::{EncoderMode, FusionSpace, GlobalBundle};
use crate::models::{predicted_label, TemplatePair};
use crate::nn::softmax;
use crate::scalar::Scalar;
use crate::tensor::{cosine_similarity, Tensor};

/// Lower clamp applied to raw attention scores before normalizing.
pub const ATTENTION_FLOOR: f64 = 1e-6;

/// Stage II output for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedPrediction<T> {
    pub site_ids: Vec<u16>,
    /// Clamped raw scores α.
    pub raw_scores: Vec<T>,
    /// Normalized weights; one-hot under hard selection.
    pub attention: Vec<T>,
    pub per_site_logits: Vec<Tensor<T>>,
    /// Combined logits. Under probability-space fusion these are the
    /// logarithms of the fused probabilities.
    pub fused_logits: Tensor<T>,
    pub probabilities: Tensor<T>,
    /// Argmax of `fused_logits`, ties to 0.
    pub predicted_label: u8,
}

impl<T: Scalar> FusedPrediction<T> {
    /// Attention mass on the given site, 0 if it is not in the bundle.
    pub fn weight_on(&self, site_id: u16) -> T {
        self.site_ids
            .iter()
            .position(|&s| s == site_id)
            .map_or(T::zero(), |i| self.attention[i])
    }
}

/// Cosine with a template, 0 when the template itself is degenerate.
fn template_cosine<T: Scalar>(t: &Tensor<T>, template: &Tensor<T>) -> Result<T> {
    match cosine_similarity(t, template) {
        Err(Error::DegenerateVector { .. }) => Ok(T::zero()),
        other => other,
    }
}

/// `max(cos(T, T̄₀) + cos(T, T̄₁), ε)` for one site; `None` if `T` is degenerate.
pub fn site_score<T: Scalar>(t: &Tensor<T>, templates: &TemplatePair<T>) -> Result<Option<T>> {
    if t.len() != templates.latent_dim() {
        return Err(Error::dim(format!(
            "latent code of length {} against templates of length {} at site {}",
            t.len(),
            templates.latent_dim(),
            templates.site_id()
        )));
    }
    let norm = crate::tensor::l2_norm(t).as_f64();
    if norm < crate::tensor::DEGENERATE_NORM {
        return Ok(None);
    }
    let sum = template_cosine(t, &templates.nc.vector)? + template_cosine(t, &templates.mdd.vector)?;
    Ok(Some(sum.max(T::lit(ATTENTION_FLOOR))))
}

/// Raw attention over sites for per-site latent codes (one code shared by
/// all sites under the global encoder). A degenerate code makes every
/// score equal.
pub fn attention_from_codes<T: Scalar>(codes: &[&Tensor<T>], templates: &[&TemplatePair<T>]) -> Result<Vec<T>> {
    if codes.len() != templates.len() {
        return Err(Error::dim(format!("{} codes for {} sites", codes.len(), templates.len())));
    }
    let mut scores = Vec::with_capacity(codes.len());
    for (t, pair) in codes.iter().zip(templates) {
        match site_score(t, pair)? {
            Some(s) => scores.push(s),
            None => {
                log::warn!(
                    "degenerate latent code for site {}; falling back to uniform attention",
                    pair.site_id()
                );
                return Ok(vec![T::one(); templates.len()]);
            }
        }
    }
    Ok(scores)
}

/// `α_s / Σα`.
pub fn normalize_attention<T: Scalar>(alpha: &[T]) -> Result<Vec<T>> {
    let sum: T = alpha.iter().copied().sum();
    if alpha.is_empty() || !(sum > T::zero()) || alpha.iter().any(|&a| a < T::zero()) {
        return Err(Error::Numeric(format!("cannot normalize attention scores {alpha:?}")));
    }
    Ok(alpha.iter().map(|&a| a / sum).collect())
}

/// Weighted sum of equally shaped vectors.
pub fn combine<T: Scalar>(weights: &[T], vectors: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Protocol("nothing to combine".into()))?;
    let mut out = Tensor::zeros_like(first);
    for (w, v) in weights.iter().zip(vectors) {
        out.add_scaled(v, *w)?;
    }
    Ok(out)
}

/// Index of the largest score; ties go to the earliest (lowest site id).
pub fn hard_select_index<T: Scalar>(alpha: &[T]) -> usize {
    let mut best = 0;
    for (i, &a) in alpha.iter().enumerate().skip(1) {
        if a > alpha[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> GlobalBundle<T> {
    /// Raw attention scores for an upper-triangle vector.
    pub fn attention_scores(&self, x_vec: &Tensor<T>) -> Result<Vec<T>> {
        let templates: Vec<&TemplatePair<T>> = self.sites.iter().map(|s| &s.templates).collect();
        match self.options.encoder {
            EncoderMode::Global => {
                let t = self.autoencoder.encode(x_vec)?;
                attention_from_codes(&vec![&t; self.sites.len()], &templates)
            }
            EncoderMode::PerSite => {
                let codes = self
                    .sites
                    .iter()
                    .map(|s| {
                        s.local_autoencoder
                            .as_ref()
                            .ok_or_else(|| Error::Config(format!("site {} has no local encoder", s.site_id)))?
                            .encode(x_vec)
                    })
                    .collect::<Result<Vec<_>>>()?;
                attention_from_codes(&codes.iter().collect::<Vec<_>>(), &templates)
            }
        }
    }

    fn site_logits(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        self.sites
            .iter()
            .map(|s| {
                s.classifier.predict(x).map_err(|e| match e {
                    Error::Dimension(m) => Error::Dimension(format!("site {}: {m}", s.site_id)),
                    other => other,
                })
            })
            .collect()
    }

    /// Soft attention fusion of every site's output.
    pub fn fuse_prepared(&self, x: &Tensor<T>, x_vec: &Tensor<T>) -> Result<FusedPrediction<T>> {
        let raw_scores = self.attention_scores(x_vec)?;
        let attention = normalize_attention(&raw_scores)?;
        let per_site_logits = self.site_logits(x)?;
        let (fused_logits, probabilities) = match self.options.fusion {
            FusionSpace::Logits => {
                let l = combine(&attention, &per_site_logits)?;
                let p = softmax(&l)?;
                (l, p)
            }
            FusionSpace::Probabilities => {
                let probs = per_site_logits.iter().map(softmax).collect::<Result<Vec<_>>>()?;
                let p = combine(&attention, &probs)?;
                (p.map(|v| v.ln()), p)
            }
        };
        Ok(FusedPrediction {
            site_ids: self.site_ids(),
            predicted_label: predicted_label(&fused_logits),
            raw_scores,
            attention,
            per_site_logits,
            fused_logits,
            probabilities,
        })
    }

    /// Only the most similar site's classifier answers.
    pub fn hard_select_prepared(&self, x: &Tensor<T>, x_vec: &Tensor<T>) -> Result<FusedPrediction<T>> {
        let raw_scores = self.attention_scores(x_vec)?;
        let best = hard_select_index(&raw_scores);
        let mut attention = vec![T::zero(); raw_scores.len()];
        attention[best] = T::one();
        let per_site_logits = self.site_logits(x)?;
        let fused_logits = per_site_logits[best].clone();
        Ok(FusedPrediction {
            site_ids: self.site_ids(),
            predicted_label: predicted_label(&fused_logits),
            probabilities: softmax(&fused_logits)?,
            raw_scores,
            attention,
            per_site_logits,
            fused_logits,
        })
    }
}

/// Stage II prediction for an FC matrix.
pub fn fuse_predictions<T: Scalar>(x: &Tensor<T>, bundle: &GlobalBundle<T>) -> Result<FusedPrediction<T>> {
    bundle.fuse_prepared(x, &upper_tri_flatten(x)?)
}

pub fn hard_select_predict<T: Scalar>(x: &Tensor<T>, bundle: &GlobalBundle<T>) -> Result<FusedPrediction<T>> {
    bundle.hard_select_prepared(x, &upper_tri_flatten(x)?)
}
