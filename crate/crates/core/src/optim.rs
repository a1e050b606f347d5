//! AdamW with decoupled weight decay, a linear warmup/decay schedule, and
//! the deterministic mini-batch training loop shared by every head.

use std::borrow::Borrow;
use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bank::PrototypeBank;
use crate::data::{Sample, Task};
use crate::error::{Error, Result};
use crate::losses::{self, LossConfig, LossValueAndGrad};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub base_lr: f64,
    pub weight_decay: f64,
    pub warmup_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed of the per-epoch shuffle streams.
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            base_lr: 1e-2,
            weight_decay: 2e-2,
            warmup_fraction: 0.10,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            epochs: 20,
            batch_size: 4,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidOptimConfig(m));
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad(format!("base_lr = {}", self.base_lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay = {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup_fraction = {}", self.warmup_fraction));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} = {b}"));
            }
        }
        if !(self.eps_adam > 0.0) {
            return bad(format!("eps_adam = {}", self.eps_adam));
        }
        if self.batch_size == 0 {
            return bad("batch_size = 0".into());
        }
        Ok(())
    }

    pub fn warmup_steps(&self, total_steps: usize) -> usize {
        (self.warmup_fraction * total_steps as f64).ceil() as usize
    }
}

/// Learning rate at `step` of `total_steps`: linear ramp from 0 to
/// `base_lr` over the warmup steps, then linear decay to 0.
pub fn lr_at(step: usize, total_steps: usize, config: &OptimConfig) -> Result<f64> {
    if total_steps == 0 || step > total_steps {
        return Err(Error::InvalidStep { step, total: total_steps });
    }
    let warmup = config.warmup_steps(total_steps);
    if step < warmup {
        return Ok(config.base_lr * step as f64 / warmup as f64);
    }
    if step >= total_steps {
        return Ok(0.0);
    }
    Ok(config.base_lr * (total_steps - step) as f64 / (total_steps - warmup) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl OptimState {
    pub fn new(len: usize) -> Self {
        OptimState { step: 0, first_moment: vec![0.0; len], second_moment: vec![0.0; len] }
    }
}

/// One bias-corrected AdamW update in place.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimState,
    lr: f64,
    config: &OptimConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.first_moment.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(i));
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - config.beta1.powi(t);
    let bias2 = 1.0 - config.beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = config.beta1 * *m + (1.0 - config.beta1) * g;
        *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= lr * (m_hat / (v_hat.sqrt() + config.eps_adam) + config.weight_decay * *p);
    }
    Ok(())
}

/// A model whose flat parameter vector the training loop can update.
pub trait Trainable {
    fn parameters(&self) -> &[f64];
    fn parameters_mut(&mut self) -> &mut [f64];
    /// Batch-mean loss and its gradient w.r.t. `parameters()`.
    fn objective(&self, batch: &[&Sample]) -> Result<LossValueAndGrad>;
    /// Task metric on a sample set (accuracy or macro-F1).
    fn metric(&self, samples: &[Sample]) -> Result<f64>;
    /// Post-step invariant check.
    fn check(&self) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub metric: f64,
}

pub type History = Vec<EpochRecord>;

/// Shuffled mini-batch AdamW over `epochs`, one optimizer step per batch.
/// Deterministic given `config.seed`.
pub fn fit<T: Trainable + ?Sized>(
    model: &mut T,
    train_set: &[Sample],
    config: &OptimConfig,
) -> Result<History> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut history = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok(history);
    }
    let steps_per_epoch = train_set.len().div_ceil(config.batch_size);
    let total = config.epochs * steps_per_epoch;
    let mut state = OptimState::new(model.parameters().len());
    let mut step = 0;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng::stream(rng::child_seed(config.seed, "shuffle", epoch as u64)));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let out = model.objective(&batch)?;
            let lr = lr_at(step, total, config)?;
            adamw_step(model.parameters_mut(), &out.grads, &mut state, lr, config)?;
            model.check()?;
            loss_sum += out.value;
            step += 1;
        }
        history.push(EpochRecord {
            epoch: epoch + 1,
            split: "train".into(),
            loss: loss_sum / steps_per_epoch as f64,
            metric: model.metric(train_set)?,
        });
    }
    Ok(history)
}

pub fn write_history_csv<W: Write>(history: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in history {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// The prototype bank together with what it needs to compute its objective.
pub struct PrototypeModel<'a> {
    pub bank: PrototypeBank,
    pub loss: &'a LossConfig,
    pub task: Task,
}

impl Trainable for PrototypeModel<'_> {
    fn parameters(&self) -> &[f64] {
        self.bank.params()
    }

    fn parameters_mut(&mut self) -> &mut [f64] {
        self.bank.params_mut()
    }

    fn objective(&self, batch: &[&Sample]) -> Result<LossValueAndGrad> {
        losses::dpl_loss(&self.bank, batch, self.loss, self.task)
    }

    fn metric(&self, samples: &[Sample]) -> Result<f64> {
        crate::heads::evaluate_bank(&self.bank, samples, self.task, crate::heads::Routing::MissingAware)
    }

    fn check(&self) -> Result<()> {
        self.bank.check_norms()
    }
}

/// Trains a prototype bank with the full objective.
pub fn train<S: Borrow<Sample>>(
    bank: PrototypeBank,
    train_set: &[S],
    loss_config: &LossConfig,
    optim_config: &OptimConfig,
    task: Task,
) -> Result<(PrototypeBank, History)> {
    loss_config.validate()?;
    let owned: Vec<Sample> = train_set.iter().map(|s| s.borrow().clone()).collect();
    let mut model = PrototypeModel { bank, loss: loss_config, task };
    let history = fit(&mut model, &owned, optim_config)?;
    Ok((model.bank, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> OptimConfig {
        OptimConfig::default()
    }

    #[test]
    fn schedule_shape() {
        let c = cfg();
        assert_eq!(lr_at(0, 100, &c).unwrap(), 0.0);
        assert!((lr_at(10, 100, &c).unwrap() - c.base_lr).abs() < 1e-12);
        assert!((lr_at(5, 100, &c).unwrap() - c.base_lr / 2.0).abs() < 1e-12);
        assert!((lr_at(55, 100, &c).unwrap() - c.base_lr / 2.0).abs() < 1e-12);
        assert!(lr_at(100, 100, &c).unwrap().abs() < 1e-12);
        assert!(matches!(lr_at(101, 100, &c), Err(Error::InvalidStep { .. })));
        assert!(matches!(lr_at(0, 0, &c), Err(Error::InvalidStep { .. })));
        // warmup rounds up
        assert_eq!(c.warmup_steps(7), 1);
        let no_warm = OptimConfig { warmup_fraction: 0.0, ..cfg() };
        assert_eq!(lr_at(0, 10, &no_warm).unwrap(), no_warm.base_lr);
    }

    #[test]
    fn first_step_closed_form() {
        let c = OptimConfig { weight_decay: 0.1, ..cfg() };
        let mut p = vec![0.5, -2.0, 1.0];
        let g = vec![0.3, -1e-3, 0.0];
        let mut s = OptimState::new(3);
        let lr = 0.05;
        adamw_step(&mut p, &g, &mut s, lr, &c).unwrap();
        // Bias correction makes m_hat = g and v_hat = g^2 on the first step.
        for ((new, old), gi) in p.iter().zip([0.5, -2.0, 1.0]).zip(&g) {
            let expect = old - lr * (gi / (gi.abs() + c.eps_adam) + c.weight_decay * old);
            assert!((new - expect).abs() < 1e-15);
        }
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_grad_zero_decay_is_fixed_point() {
        let c = OptimConfig { weight_decay: 0.0, ..cfg() };
        let mut p = vec![0.5, -2.0];
        let mut s = OptimState::new(2);
        for _ in 0..3 {
            adamw_step(&mut p, &[0.0, 0.0], &mut s, 0.1, &c).unwrap();
        }
        assert_eq!(p, vec![0.5, -2.0]);
    }

    #[test]
    fn decay_only_shrinks_norm() {
        let mut p = vec![0.5, -2.0];
        let before = crate::numerics::norm(&p);
        adamw_step(&mut p, &[0.0, 0.0], &mut OptimState::new(2), 0.1, &cfg()).unwrap();
        assert!(crate::numerics::norm(&p) < before);
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut p = vec![1.0, 1.0];
        let mut s = OptimState::new(2);
        assert!(matches!(
            adamw_step(&mut p, &[0.0, f64::NAN], &mut s, 0.1, &cfg()),
            Err(Error::NonFiniteGradient(1))
        ));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn config_validation() {
        cfg().validate().unwrap();
        assert!(OptimConfig { warmup_fraction: 1.0, ..cfg() }.validate().is_err());
        assert!(OptimConfig { base_lr: 0.0, ..cfg() }.validate().is_err());
        assert!(OptimConfig { beta2: 1.0, ..cfg() }.validate().is_err());
        assert!(OptimConfig { batch_size: 0, ..cfg() }.validate().is_err());
    }
}
