//! Cosine-similarity logits against pattern-selected prototype components,
//! the minimum-entropy fallback used when the missing pattern is not
//! trusted, and the multiclass/multilabel decision rules.

use crate::bank::{ComponentKey, Modality, MissingPattern, PrototypeBank, COMPONENTS_PER_CLASS};
use crate::error::{Error, Result};
use crate::numerics;

#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub values: Vec<f64>,
    pub pattern_used: MissingPattern,
}

/// Which modality components the given pattern reads, with their weights.
pub(crate) fn scored_modalities(pattern: MissingPattern) -> &'static [(Modality, f64)] {
    match pattern {
        MissingPattern::Complete => &[(Modality::Image, 0.5), (Modality::Text, 0.5)],
        MissingPattern::ImageMissing => &[(Modality::Text, 1.0)],
        MissingPattern::TextMissing => &[(Modality::Image, 1.0)],
    }
}

pub(crate) fn check_presence(image: bool, text: bool, pattern: MissingPattern) -> Result<()> {
    if MissingPattern::from_presence(image, text) != Some(pattern) {
        return Err(Error::PatternMismatch { pattern });
    }
    Ok(())
}

/// Normalized modality features of one sample. Absent modalities stay
/// `None` and are never normalized.
#[derive(Debug, Clone)]
pub(crate) struct NormalizedFeatures {
    pub image: Option<Vec<f64>>,
    pub text: Option<Vec<f64>>,
}

impl NormalizedFeatures {
    pub fn new(image: Option<&[f64]>, text: Option<&[f64]>) -> Result<Self> {
        Ok(NormalizedFeatures {
            image: image.map(numerics::l2_normalize).transpose()?,
            text: text.map(numerics::l2_normalize).transpose()?,
        })
    }

    pub fn get(&self, modality: Modality) -> Option<&[f64]> {
        match modality {
            Modality::Image => self.image.as_deref(),
            Modality::Text => self.text.as_deref(),
        }
    }
}

/// All components of a bank normalized once, for batch scoring and
/// gradient computation.
#[derive(Debug, Clone)]
pub(crate) struct NormalizedBank {
    pub classes: usize,
    pub units: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
}

impl NormalizedBank {
    pub fn new(bank: &PrototypeBank) -> Result<Self> {
        let mut units = Vec::with_capacity(bank.classes() * COMPONENTS_PER_CLASS);
        let mut norms = Vec::with_capacity(units.capacity());
        for raw in bank.params().chunks(bank.dim()) {
            let (u, n) = numerics::normalize_with_norm(raw)?;
            units.push(u);
            norms.push(n);
        }
        Ok(NormalizedBank { classes: bank.classes(), units, norms })
    }

    pub fn index(key: &ComponentKey) -> usize {
        key.class_index * COMPONENTS_PER_CLASS + key.slot()
    }

    pub fn unit(&self, key: &ComponentKey) -> &[f64] {
        &self.units[Self::index(key)]
    }

    pub fn cosines(&self, feats: &NormalizedFeatures, pattern: MissingPattern) -> Vec<f64> {
        (0..self.classes)
            .map(|k| {
                eq2_logit(scored_modalities(pattern).iter().map(|&(m, w)| {
                    let h = feats.get(m).expect("presence checked");
                    (w, numerics::dot(h, self.unit(&ComponentKey::new(k, pattern, m))))
                }))
            })
            .collect()
    }
}

fn eq2_logit(terms: impl Iterator<Item = (f64, f64)>) -> f64 {
    // Complete: (a + b) / 2; single modality: the one cosine.
    let terms: Vec<(f64, f64)> = terms.collect();
    match terms.as_slice() {
        [(_, a), (_, b)] => (a + b) / 2.0,
        [(_, a)] => *a,
        _ => unreachable!("one or two scored modalities"),
    }
}

/// Logits for one sample under an explicit missing pattern.
///
/// Only the components the pattern scores are read, so the remaining bank
/// entries and any absent-modality content cannot influence the output.
pub fn score(
    bank: &PrototypeBank,
    image: Option<&[f64]>,
    text: Option<&[f64]>,
    pattern: MissingPattern,
) -> Result<Logits> {
    check_presence(image.is_some(), text.is_some(), pattern)?;
    let feats = NormalizedFeatures::new(image, text)?;
    let mut values = Vec::with_capacity(bank.classes());
    for k in 0..bank.classes() {
        let mut terms = Vec::with_capacity(2);
        for &(m, w) in scored_modalities(pattern) {
            let unit = bank.normalized_component(&ComponentKey::new(k, pattern, m))?;
            terms.push((w, numerics::dot(feats.get(m).expect("presence checked"), &unit)));
        }
        values.push(eq2_logit(terms.into_iter()));
    }
    Ok(Logits { values, pattern_used: pattern })
}

/// Patterns whose scored modalities are all available, in pattern order.
pub fn candidate_patterns(image: bool, text: bool) -> Vec<MissingPattern> {
    MissingPattern::ALL
        .into_iter()
        .filter(|p| {
            scored_modalities(*p).iter().all(|(m, _)| match m {
                Modality::Image => image,
                Modality::Text => text,
            })
        })
        .collect()
}

/// Picks, among the candidate patterns, the logits with the lowest softmax
/// entropy. Earlier patterns win exact ties.
pub fn select_min_entropy(candidates: Vec<Logits>) -> Result<Logits> {
    let mut best: Option<(f64, Logits)> = None;
    for logits in candidates {
        let h = numerics::entropy(&numerics::stable_softmax(&logits.values))?;
        match &best {
            Some((best_h, _)) if h >= *best_h => {}
            _ => best = Some((h, logits)),
        }
    }
    best.map(|(_, l)| l).ok_or(Error::NoModalityPresent)
}

/// Scores every pattern compatible with the available modalities and keeps
/// the most confident one.
pub fn score_min_entropy(
    bank: &PrototypeBank,
    image: Option<&[f64]>,
    text: Option<&[f64]>,
) -> Result<Logits> {
    if image.is_none() && text.is_none() {
        return Err(Error::NoModalityPresent);
    }
    let candidates = candidate_patterns(image.is_some(), text.is_some())
        .into_iter()
        .map(|p| {
            score(
                bank,
                image.filter(|_| p != MissingPattern::ImageMissing),
                text.filter(|_| p != MissingPattern::TextMissing),
                p,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    select_min_entropy(candidates)
}

/// Argmax with ties going to the smallest index.
pub fn decide_multiclass(z: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in z.iter().enumerate().skip(1) {
        if *v > z[best] {
            best = k;
        }
    }
    best
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub fn decide_multilabel(z: &[f64], threshold: f64) -> Result<Vec<bool>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidThreshold(threshold));
    }
    Ok(z.iter().map(|v| numerics::sigmoid(*v) > threshold).collect())
}
