//! Missing-aware prototypes that are NOT split by modality: one
//! `(d_img + d_txt)`-dimensional prototype per class and pattern,
//! normalized as a whole.

use std::borrow::Borrow;

use rand_distr::{Distribution, StandardNormal};

use crate::bank::{MissingPattern, Modality, PrototypeBank, ComponentKey};
use crate::data::{Sample, Task};
use crate::error::{Error, Result};
use crate::losses::{check_dims, margin_loss, relational_contrastive, target_of, LossConfig, LossValueAndGrad};
use crate::numerics;
use crate::optim::{fit, History, OptimConfig, Trainable};
use crate::rng;
use crate::scoring::{check_presence, Logits};

const PATTERNS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct UndecomposedBank {
    classes: usize,
    image_dim: usize,
    text_dim: usize,
    /// `(class, pattern, dim)` row-major.
    params: Vec<f64>,
}

impl UndecomposedBank {
    pub fn init(classes: usize, image_dim: usize, text_dim: usize, seed: u64) -> Result<Self> {
        let width = image_dim + text_dim;
        if classes < 1 || image_dim < 1 || text_dim < 1 {
            return Err(Error::InvalidShape(format!(
                "K={classes}, d_img={image_dim}, d_txt={text_dim}"
            )));
        }
        let mut s = rng::stream(seed);
        let mut params = Vec::with_capacity(classes * PATTERNS * width);
        for _ in 0..classes * PATTERNS {
            let unit = loop {
                let v: Vec<f64> = (0..width).map(|_| StandardNormal.sample(&mut s)).collect();
                if let Ok(u) = numerics::l2_normalize(&v) {
                    break u;
                }
            };
            params.extend(unit);
        }
        Ok(UndecomposedBank { classes, image_dim, text_dim, params })
    }

    /// Joins each `(image, text)` component pair of a decomposed bank.
    pub fn from_decomposed(bank: &PrototypeBank) -> Self {
        let mut params = Vec::with_capacity(bank.params().len());
        for k in 0..bank.classes() {
            for p in MissingPattern::ALL {
                for m in Modality::ALL {
                    params.extend_from_slice(bank.raw_component(&ComponentKey::new(k, p, m)).unwrap());
                }
            }
        }
        UndecomposedBank { classes: bank.classes(), image_dim: bank.dim(), text_dim: bank.dim(), params }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn width(&self) -> usize {
        self.image_dim + self.text_dim
    }

    pub fn prototype(&self, class_index: usize, pattern: MissingPattern) -> &[f64] {
        let w = self.width();
        let start = (class_index * PATTERNS + pattern.index()) * w;
        &self.params[start..start + w]
    }

    pub fn prototype_mut(&mut self, class_index: usize, pattern: MissingPattern) -> &mut [f64] {
        let w = self.width();
        let start = (class_index * PATTERNS + pattern.index()) * w;
        &mut self.params[start..start + w]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Same shape with replaced parameters.
    pub fn with_params(&self, params: &[f64]) -> Self {
        assert_eq!(params.len(), self.params.len());
        UndecomposedBank { params: params.to_vec(), ..self.clone() }
    }

    fn joint_input(&self, image: Option<&[f64]>, text: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(self.width());
        match image {
            Some(v) => x.extend_from_slice(v),
            None => x.extend(std::iter::repeat_n(0.0, self.image_dim)),
        }
        match text {
            Some(v) => x.extend_from_slice(v),
            None => x.extend(std::iter::repeat_n(0.0, self.text_dim)),
        }
        numerics::l2_normalize(&x)
    }

    fn units(&self) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let mut units = Vec::with_capacity(self.classes * PATTERNS);
        let mut norms = Vec::with_capacity(units.capacity());
        for raw in self.params.chunks(self.width()) {
            let (u, n) = numerics::normalize_with_norm(raw)?;
            units.push(u);
            norms.push(n);
        }
        Ok((units, norms))
    }
}

/// Cosine between the jointly normalized zero-padded input and the jointly
/// normalized prototype of `pattern`.
pub fn undecomposed_score(
    bank: &UndecomposedBank,
    image: Option<&[f64]>,
    text: Option<&[f64]>,
    pattern: MissingPattern,
) -> Result<Logits> {
    check_presence(image.is_some(), text.is_some(), pattern)?;
    let x = bank.joint_input(image, text)?;
    let values = (0..bank.classes)
        .map(|k| Ok(numerics::dot(&x, &numerics::l2_normalize(bank.prototype(k, pattern))?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Logits { values, pattern_used: pattern })
}

/// Per-pattern margin loss plus `lambda` times a contrastive term over each
/// class's three prototypes.
pub fn undecomposed_objective<S: Borrow<Sample>>(
    bank: &UndecomposedBank,
    batch: &[S],
    config: &LossConfig,
    task: Task,
) -> Result<LossValueAndGrad> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (units, norms) = bank.units()?;
    let mut unit_grads = vec![vec![0.0; bank.width()]; units.len()];
    let inv = 1.0 / batch.len() as f64;
    let mut value = 0.0;
    for sample in batch {
        let sample = sample.borrow();
        check_dims(sample, bank.image_dim, bank.text_dim)?;
        let pattern = sample.require_pattern()?;
        let target = target_of(sample, task, bank.classes)?;
        let x = bank.joint_input(sample.image(), sample.text())?;
        let idx = |k: usize| k * PATTERNS + pattern.index();
        let z: Vec<f64> = (0..bank.classes).map(|k| numerics::dot(&x, &units[idx(k)])).collect();
        let (loss, dz) = margin_loss(&z, &target, config.for_pattern(pattern));
        value += loss;
        for (k, dzk) in dz.iter().enumerate() {
            for (g, xi) in unit_grads[idx(k)].iter_mut().zip(&x) {
                *g += dzk * inv * xi;
            }
        }
    }
    value *= inv;
    if config.lambda != 0.0 {
        let (prc, prc_grads) = relational_contrastive(&units, PATTERNS)?;
        value += config.lambda * prc;
        for (g, pg) in unit_grads.iter_mut().zip(&prc_grads) {
            for (a, b) in g.iter_mut().zip(pg) {
                *a += config.lambda * b;
            }
        }
    }
    let grads = unit_grads
        .iter()
        .zip(units.iter().zip(&norms))
        .flat_map(|(g, (u, n))| numerics::normalize_backward(u, *n, g))
        .collect();
    Ok(LossValueAndGrad { value, grads })
}

pub(crate) struct UndecomposedModel<'a> {
    pub bank: UndecomposedBank,
    pub loss: &'a LossConfig,
    pub task: Task,
}

impl Trainable for UndecomposedModel<'_> {
    fn parameters(&self) -> &[f64] {
        &self.bank.params
    }

    fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.bank.params
    }

    fn objective(&self, batch: &[&Sample]) -> Result<LossValueAndGrad> {
        undecomposed_objective(&self.bank, batch, self.loss, self.task)
    }

    fn metric(&self, samples: &[Sample]) -> Result<f64> {
        let logits = samples
            .iter()
            .map(|s| Ok(undecomposed_score(&self.bank, s.image(), s.text(), s.require_pattern()?)?.values))
            .collect::<Result<Vec<_>>>()?;
        crate::heads::task_metric(&logits, samples, self.task)
    }

    fn check(&self) -> Result<()> {
        self.bank.units().map(|_| ())
    }
}

pub fn undecomposed_train(
    bank: UndecomposedBank,
    train_set: &[Sample],
    loss: &LossConfig,
    optim: &OptimConfig,
    task: Task,
) -> Result<(UndecomposedBank, History)> {
    loss.validate()?;
    let mut model = UndecomposedModel { bank, loss, task };
    let history = fit(&mut model, train_set, optim)?;
    Ok((model.bank, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::score;

    #[test]
    fn matches_decomposed_score_for_equal_norm_halves() {
        // Equal-norm image/text halves on both the features and the
        // prototypes make joint and per-component normalization agree.
        let mut bank = PrototypeBank::init(3, 4, 9).unwrap();
        for k in 0..3 {
            for key in ComponentKey::class_components(k) {
                let unit = bank.normalized_component(&key).unwrap();
                bank.set_component(&key, &unit.iter().map(|x| x * 2.5).collect::<Vec<_>>()).unwrap();
            }
        }
        let und = UndecomposedBank::from_decomposed(&bank);
        let hi = numerics::l2_normalize(&[0.3, -0.1, 0.7, 0.2]).unwrap();
        let ht = numerics::l2_normalize(&[-0.4, 0.5, 0.1, 0.9]).unwrap();
        let a = score(&bank, Some(&hi), Some(&ht), MissingPattern::Complete).unwrap();
        let b = undecomposed_score(&und, Some(&hi), Some(&ht), MissingPattern::Complete).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_image_is_bounded_by_text_half_share() {
        let bank = UndecomposedBank::init(4, 3, 3, 2).unwrap();
        let t = [0.2, -0.9, 0.4];
        let z = undecomposed_score(&bank, None, Some(&t), MissingPattern::ImageMissing).unwrap();
        for k in 0..4 {
            let w = bank.prototype(k, MissingPattern::ImageMissing);
            let bound = numerics::norm(&w[3..]) / numerics::norm(w);
            assert!(bound < 1.0);
            assert!(z.values[k].abs() <= bound + 1e-12);
        }
    }

    #[test]
    fn logits_bounded_and_pattern_checked() {
        let bank = UndecomposedBank::init(3, 2, 2, 2).unwrap();
        let z = undecomposed_score(&bank, Some(&[1.0, 2.0]), Some(&[0.5, -1.0]), MissingPattern::Complete).unwrap();
        assert!(z.values.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        assert!(matches!(
            undecomposed_score(&bank, Some(&[1.0, 2.0]), None, MissingPattern::Complete),
            Err(Error::PatternMismatch { .. })
        ));
    }
}
