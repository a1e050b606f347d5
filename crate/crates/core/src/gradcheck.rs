//! Central finite-difference checks of every analytic loss gradient.

use rand::Rng;

use crate::bank::PrototypeBank;
use crate::baselines::{fc_objective, undecomposed_objective, FcHead, UndecomposedBank};
use crate::data::{Label, Sample, Task};
use crate::error::Result;
use crate::losses::{self, LossConfig, ScaleMargin};
use crate::rng::{self, Stream};

pub const FD_STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor for the relative error, so an all-zero gradient is
/// compared absolutely.
pub const REL_FLOOR: f64 = 1e-8;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_difference<F>(f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let plus = f(&probe)?;
        probe[i] = x[i] - step;
        let minus = f(&probe)?;
        probe[i] = x[i];
        out.push((plus - minus) / (2.0 * step));
    }
    Ok(out)
}

/// `max_i |a_i - n_i| / max(|a|_inf, |n|_inf, REL_FLOOR)`.
///
/// Errors are measured against the gradient's overall scale: entries many
/// orders below the largest one are dominated by the O(h^2) truncation
/// error of the central difference, not by the analytic gradient.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let inf_norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = inf_norm(analytic).max(inf_norm(numeric)).max(REL_FLOOR);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / scale)
        .fold(0.0, f64::max)
}

/// A random small problem: bank shape, batch with mixed missing patterns,
/// and loss hyperparameters.
#[derive(Debug, Clone)]
pub struct Instance {
    pub classes: usize,
    pub dim: usize,
    pub batch: Vec<Sample>,
    pub multilabel_batch: Vec<Sample>,
    pub config: LossConfig,
    pub bank_seed: u64,
}

fn random_vec(s: &mut Stream, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| s.random_range(-1.0..1.0)).collect()
}

impl Instance {
    /// K in 2..=5, d in 3..=8, batch in 1..=8, scale in [1, 30],
    /// margin in [0, 0.5], lambda in [0, 2].
    pub fn draw(seed: u64) -> Instance {
        let mut s = rng::stream(seed);
        let classes = s.random_range(2..=5);
        let dim = s.random_range(3..=8);
        let n = s.random_range(1..=8);
        let mut batch = Vec::with_capacity(n);
        let mut multilabel_batch = Vec::with_capacity(n);
        for _ in 0..n {
            let (image, text) = match s.random_range(0..3) {
                0 => (Some(random_vec(&mut s, dim)), Some(random_vec(&mut s, dim))),
                1 => (None, Some(random_vec(&mut s, dim))),
                _ => (Some(random_vec(&mut s, dim)), None),
            };
            let class = s.random_range(0..classes);
            let multi: Vec<bool> = (0..classes).map(|_| s.random_bool(0.4)).collect();
            batch.push(Sample { image: image.clone(), text: text.clone(), label: Label::Class(class) });
            multilabel_batch.push(Sample { image, text, label: Label::Multi(multi) });
        }
        let mut sm = || ScaleMargin { scale: s.random_range(1.0..30.0), margin: s.random_range(0.0..0.5) };
        let (complete, image_missing, text_missing) = (sm(), sm(), sm());
        let config = LossConfig { lambda: s.random_range(0.0..2.0), complete, image_missing, text_missing };
        Instance { classes, dim, batch, multilabel_batch, config, bank_seed: s.random() }
    }

    /// A bank with non-unit component norms.
    pub fn bank(&self) -> PrototypeBank {
        let mut bank = PrototypeBank::init(self.classes, self.dim, self.bank_seed).unwrap();
        let mut s = rng::stream(self.bank_seed ^ 0x5eed);
        for chunk in bank.params_mut().chunks_mut(self.dim) {
            let scale = s.random_range(0.5..2.0);
            chunk.iter_mut().for_each(|x| *x *= scale);
        }
        bank
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub loss: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

fn bank_check<F>(bank: &PrototypeBank, loss: F) -> Result<f64>
where
    F: Fn(&PrototypeBank) -> Result<losses::LossValueAndGrad>,
{
    let analytic = loss(bank)?.grads;
    let numeric = central_difference(
        |p| loss(&PrototypeBank::from_params(bank.classes(), bank.dim(), p.to_vec())?).map(|o| o.value),
        bank.params(),
        FD_STEP,
    )?;
    Ok(max_relative_error(&analytic, &numeric))
}

/// Worst relative error of each prototype-bank loss over `count` instances
/// drawn from `seed`.
pub fn check_bank_losses(count: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let names = ["arcface_multiclass", "arcface_multilabel", "prc_loss", "dpl_loss"];
    let mut worst = [0.0f64; 4];
    for i in 0..count {
        let inst = Instance::draw(rng::child_seed(seed, "gradcheck", i as u64));
        let bank = inst.bank();
        let errs = [
            bank_check(&bank, |b| losses::arcface_multiclass(b, &inst.batch, &inst.config))?,
            bank_check(&bank, |b| losses::arcface_multilabel(b, &inst.multilabel_batch, &inst.config))?,
            bank_check(&bank, losses::prc_loss)?,
            bank_check(&bank, |b| losses::dpl_loss(b, &inst.batch, &inst.config, Task::Multiclass))?,
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    Ok(names
        .iter()
        .zip(worst)
        .map(|(loss, max_rel_error)| CheckResult { loss, instances: count, max_rel_error })
        .collect())
}

/// Same check for the FC and un-decomposed baseline objectives.
pub fn check_baseline_losses(count: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut worst = [0.0f64; 4];
    for i in 0..count {
        let inst = Instance::draw(rng::child_seed(seed, "gradcheck-baseline", i as u64));
        let fc = FcHead::init(inst.classes, inst.dim, inst.dim, inst.bank_seed)?;
        // Larger weights than the init range so the softmax is not flat.
        let fc_params: Vec<f64> = fc.params().iter().map(|w| w * 50.0).collect();
        let und = UndecomposedBank::init(inst.classes, inst.dim, inst.dim, inst.bank_seed)?;
        let errs = [
            fc_grad_error(&fc, &fc_params, &inst.batch, Task::Multiclass)?,
            fc_grad_error(&fc, &fc_params, &inst.multilabel_batch, Task::Multilabel)?,
            und_grad_error(&und, &inst.batch, &inst.config, Task::Multiclass)?,
            und_grad_error(&und, &inst.multilabel_batch, &inst.config, Task::Multilabel)?,
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    let names = ["fc_multiclass", "fc_multilabel", "undecomposed_multiclass", "undecomposed_multilabel"];
    Ok(names
        .iter()
        .zip(worst)
        .map(|(loss, max_rel_error)| CheckResult { loss, instances: count, max_rel_error })
        .collect())
}

fn fc_grad_error(template: &FcHead, params: &[f64], batch: &[Sample], task: Task) -> Result<f64> {
    let with = |p: &[f64]| {
        let mut h = template.clone();
        h.params_mut().copy_from_slice(p);
        h
    };
    let analytic = fc_objective(&with(params), batch, task)?.grads;
    let numeric = central_difference(|p| fc_objective(&with(p), batch, task).map(|o| o.value), params, FD_STEP)?;
    Ok(max_relative_error(&analytic, &numeric))
}

fn und_grad_error(bank: &UndecomposedBank, batch: &[Sample], config: &LossConfig, task: Task) -> Result<f64> {
    let with = |p: &[f64]| bank.with_params(p);
    let analytic = undecomposed_objective(bank, batch, config, task)?.grads;
    let numeric = central_difference(
        |p| undecomposed_objective(&with(p), batch, config, task).map(|o| o.value),
        bank.params(),
        FD_STEP,
    )?;
    Ok(max_relative_error(&analytic, &numeric))
}
