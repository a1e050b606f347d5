//! Training objectives for the prototype bank: per-pattern additive angular
//! margin losses plus the relational contrastive regularizer.

mod margin;
mod prc;

use std::borrow::Borrow;

use serde::{Deserialize, Serialize};

use crate::bank::{ComponentKey, MissingPattern, PrototypeBank};
use crate::data::{Sample, Task};
use crate::error::{Error, Result};
use crate::numerics;
use crate::scoring::{scored_modalities, NormalizedBank, NormalizedFeatures};

pub use margin::{apply_margin, margin_binary_cross_entropy, margin_cross_entropy, EPS_CLAMP};
pub use prc::{prc_loss, relational_contrastive};

/// Logit scale and angular margin (radians) for one missing pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleMargin {
    pub scale: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub lambda: f64,
    pub complete: ScaleMargin,
    pub image_missing: ScaleMargin,
    pub text_missing: ScaleMargin,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 1.0,
            complete: ScaleMargin { scale: 30.0, margin: 0.15 },
            image_missing: ScaleMargin { scale: 30.0, margin: 0.10 },
            text_missing: ScaleMargin { scale: 30.0, margin: 0.10 },
        }
    }
}

impl LossConfig {
    pub fn for_pattern(&self, pattern: MissingPattern) -> ScaleMargin {
        match pattern {
            MissingPattern::Complete => self.complete,
            MissingPattern::ImageMissing => self.image_missing,
            MissingPattern::TextMissing => self.text_missing,
        }
    }

    pub fn pattern_mut(&mut self, pattern: MissingPattern) -> &mut ScaleMargin {
        match pattern {
            MissingPattern::Complete => &mut self.complete,
            MissingPattern::ImageMissing => &mut self.image_missing,
            MissingPattern::TextMissing => &mut self.text_missing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidLossConfig(format!("lambda = {}", self.lambda)));
        }
        for p in MissingPattern::ALL {
            let sm = self.for_pattern(p);
            if !(sm.scale > 0.0 && sm.scale.is_finite()) {
                return Err(Error::InvalidLossConfig(format!("{}: scale = {}", p.name(), sm.scale)));
            }
            if !(sm.margin >= 0.0 && sm.margin < std::f64::consts::FRAC_PI_2) {
                return Err(Error::InvalidLossConfig(format!("{}: margin = {}", p.name(), sm.margin)));
            }
        }
        Ok(())
    }
}

/// A loss value with its gradient, shaped like the parameters it was taken
/// against.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValueAndGrad {
    pub value: f64,
    pub grads: Vec<f64>,
}

impl LossValueAndGrad {
    /// `self + weight * other`. A zero weight returns `self` untouched.
    pub fn add_scaled(mut self, other: &LossValueAndGrad, weight: f64) -> Self {
        if weight == 0.0 {
            return self;
        }
        self.value += weight * other.value;
        for (g, o) in self.grads.iter_mut().zip(&other.grads) {
            *g += weight * o;
        }
        self
    }
}

pub(crate) enum Target<'a> {
    Class(usize),
    Multi(&'a [bool]),
}

/// Validates one sample's label against the task and class count.
pub(crate) fn target_of(sample: &Sample, task: Task, classes: usize) -> Result<Target<'_>> {
    match task {
        Task::Multiclass => {
            let y = sample.label.class()?;
            if y >= classes {
                return Err(Error::LabelOutOfRange { label: y, classes });
            }
            Ok(Target::Class(y))
        }
        Task::Multilabel => {
            let y = sample.label.multi()?;
            if y.len() != classes {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {classes} classes",
                    y.len()
                )));
            }
            Ok(Target::Multi(y))
        }
    }
}

/// Per-sample margin loss and its gradient w.r.t. the cosine logits.
pub(crate) fn margin_loss(z: &[f64], target: &Target, sm: ScaleMargin) -> (f64, Vec<f64>) {
    match target {
        Target::Class(y) => margin_cross_entropy(z, *y, sm.scale, sm.margin),
        Target::Multi(y) => margin_binary_cross_entropy(z, y, sm.scale, sm.margin),
    }
}

pub(crate) fn check_dims(sample: &Sample, image_dim: usize, text_dim: usize) -> Result<()> {
    for (f, d, name) in [(sample.image(), image_dim, "image"), (sample.text(), text_dim, "text")] {
        if let Some(f) = f {
            if f.len() != d {
                return Err(Error::ShapeMismatch(format!("{name} feature length {} != {d}", f.len())));
            }
        }
    }
    Ok(())
}

fn arcface<S: Borrow<Sample>>(
    bank: &PrototypeBank,
    batch: &[S],
    config: &LossConfig,
    task: Task,
) -> Result<LossValueAndGrad> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let nb = NormalizedBank::new(bank)?;
    let dim = bank.dim();
    let mut unit_grads = vec![vec![0.0; dim]; nb.units.len()];
    let inv_batch = 1.0 / batch.len() as f64;
    let mut value = 0.0;
    for sample in batch {
        let sample = sample.borrow();
        check_dims(sample, dim, dim)?;
        let pattern = sample.require_pattern()?;
        let target = target_of(sample, task, bank.classes())?;
        let feats = NormalizedFeatures::new(sample.image(), sample.text())?;
        let z = nb.cosines(&feats, pattern);
        let (loss, dz) = margin_loss(&z, &target, config.for_pattern(pattern));
        value += loss;
        for (k, dzk) in dz.iter().enumerate() {
            for &(m, w) in scored_modalities(pattern) {
                let h = feats.get(m).expect("presence checked");
                let g = &mut unit_grads[NormalizedBank::index(&ComponentKey::new(k, pattern, m))];
                let c = dzk * w * inv_batch;
                for (gi, hi) in g.iter_mut().zip(h) {
                    *gi += c * hi;
                }
            }
        }
    }
    let grads = unit_grads
        .iter()
        .zip(nb.units.iter().zip(&nb.norms))
        .flat_map(|(g, (u, n))| numerics::normalize_backward(u, *n, g))
        .collect();
    Ok(LossValueAndGrad { value: value * inv_batch, grads })
}

/// Batch-mean softmax cross-entropy with a per-pattern additive angular
/// margin on the target class.
pub fn arcface_multiclass<S: Borrow<Sample>>(
    bank: &PrototypeBank,
    batch: &[S],
    config: &LossConfig,
) -> Result<LossValueAndGrad> {
    arcface(bank, batch, config, Task::Multiclass)
}

/// Batch-mean of the per-class binary cross-entropy with the margin applied
/// to positive classes.
pub fn arcface_multilabel<S: Borrow<Sample>>(
    bank: &PrototypeBank,
    batch: &[S],
    config: &LossConfig,
) -> Result<LossValueAndGrad> {
    arcface(bank, batch, config, Task::Multilabel)
}

/// Margin loss plus `lambda` times the relational contrastive loss.
pub fn dpl_loss<S: Borrow<Sample>>(
    bank: &PrototypeBank,
    batch: &[S],
    config: &LossConfig,
    task: Task,
) -> Result<LossValueAndGrad> {
    let margin = arcface(bank, batch, config, task)?;
    if config.lambda == 0.0 {
        return Ok(margin);
    }
    Ok(margin.add_scaled(&prc_loss(bank)?, config.lambda))
}
