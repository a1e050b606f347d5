//! Fully-connected head over zero-padded concatenated features.

use std::borrow::Borrow;

use rand::Rng;

use crate::data::{Sample, Task};
use crate::error::{Error, Result};
use crate::losses::{check_dims, target_of, LossValueAndGrad, Target};
use crate::numerics;
use crate::optim::{fit, History, OptimConfig, Trainable};
use crate::rng;

/// `z = W [pad(image); pad(text)] + b`. The same weights score every
/// sample regardless of which modalities it has.
#[derive(Debug, Clone, PartialEq)]
pub struct FcHead {
    classes: usize,
    image_dim: usize,
    text_dim: usize,
    /// `K x (image_dim + text_dim)` weights, row-major, then `K` biases.
    params: Vec<f64>,
}

const INIT_RANGE: f64 = 0.01;

impl FcHead {
    /// Small uniform weights in `[-0.01, 0.01)`, zero bias.
    pub fn init(classes: usize, image_dim: usize, text_dim: usize, seed: u64) -> Result<Self> {
        if classes < 1 || image_dim + text_dim < 1 {
            return Err(Error::InvalidShape(format!(
                "K={classes}, d_img={image_dim}, d_txt={text_dim}"
            )));
        }
        let mut s = rng::stream(seed);
        let inputs = image_dim + text_dim;
        let mut params: Vec<f64> = (0..classes * inputs)
            .map(|_| s.random_range(-INIT_RANGE..INIT_RANGE))
            .collect();
        params.extend(std::iter::repeat_n(0.0, classes));
        Ok(FcHead { classes, image_dim, text_dim, params })
    }

    pub fn from_parts(weight: Vec<f64>, bias: Vec<f64>, image_dim: usize, text_dim: usize) -> Result<Self> {
        let classes = bias.len();
        if classes == 0 || weight.len() != classes * (image_dim + text_dim) {
            return Err(Error::InvalidShape(format!(
                "weight {} for K={classes} x {}",
                weight.len(),
                image_dim + text_dim
            )));
        }
        let mut params = weight;
        params.extend(bias);
        Ok(FcHead { classes, image_dim, text_dim, params })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn inputs(&self) -> usize {
        self.image_dim + self.text_dim
    }

    pub fn weight(&self) -> &[f64] {
        &self.params[..self.classes * self.inputs()]
    }

    pub fn bias(&self) -> &[f64] {
        &self.params[self.classes * self.inputs()..]
    }

    fn padded(&self, image: Option<&[f64]>, text: Option<&[f64]>) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.inputs());
        match image {
            Some(v) => x.extend_from_slice(v),
            None => x.extend(std::iter::repeat_n(0.0, self.image_dim)),
        }
        match text {
            Some(v) => x.extend_from_slice(v),
            None => x.extend(std::iter::repeat_n(0.0, self.text_dim)),
        }
        x
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
}

pub fn fc_score(head: &FcHead, image: Option<&[f64]>, text: Option<&[f64]>) -> Vec<f64> {
    let x = head.padded(image, text);
    head.weight()
        .chunks(head.inputs())
        .zip(head.bias())
        .map(|(row, b)| numerics::dot(row, &x) + b)
        .collect()
}

/// Batch-mean cross-entropy (multiclass) or per-class BCE (multilabel) on
/// the raw FC logits.
pub fn fc_objective<S: Borrow<Sample>>(head: &FcHead, batch: &[S], task: Task) -> Result<LossValueAndGrad> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let inputs = head.inputs();
    let mut grads = vec![0.0; head.params.len()];
    let inv = 1.0 / batch.len() as f64;
    let mut value = 0.0;
    for sample in batch {
        let sample = sample.borrow();
        check_dims(sample, head.image_dim, head.text_dim)?;
        let x = head.padded(sample.image(), sample.text());
        let z = fc_score(head, sample.image(), sample.text());
        let (loss, dz) = match target_of(sample, task, head.classes)? {
            Target::Class(y) => numerics::softmax_cross_entropy(&z, y),
            Target::Multi(y) => {
                let k = z.len() as f64;
                let sign = |t: bool| if t { -1.0 } else { 1.0 };
                let loss = z.iter().zip(y).map(|(v, &t)| numerics::softplus(sign(t) * v)).sum::<f64>() / k;
                let dz = z.iter().zip(y).map(|(v, &t)| sign(t) * numerics::sigmoid(sign(t) * v) / k).collect();
                (loss, dz)
            }
        };
        value += loss;
        for (k, dzk) in dz.iter().enumerate() {
            let c = dzk * inv;
            for (g, xi) in grads[k * inputs..(k + 1) * inputs].iter_mut().zip(&x) {
                *g += c * xi;
            }
            grads[head.classes * inputs + k] += c;
        }
    }
    Ok(LossValueAndGrad { value: value * inv, grads })
}

pub(crate) struct FcModel {
    pub head: FcHead,
    pub task: Task,
}

impl Trainable for FcModel {
    fn parameters(&self) -> &[f64] {
        &self.head.params
    }

    fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.head.params
    }

    fn objective(&self, batch: &[&Sample]) -> Result<LossValueAndGrad> {
        fc_objective(&self.head, batch, self.task)
    }

    fn metric(&self, samples: &[Sample]) -> Result<f64> {
        let logits: Vec<Vec<f64>> = samples.iter().map(|s| fc_score(&self.head, s.image(), s.text())).collect();
        crate::heads::task_metric(&logits, samples, self.task)
    }
}

pub fn fc_train(head: FcHead, train_set: &[Sample], optim: &OptimConfig, task: Task) -> Result<(FcHead, History)> {
    let mut model = FcModel { head, task };
    let history = fit(&mut model, train_set, optim)?;
    Ok((model.head, history))
}
