//! Classification heads behind one trait, looked up by name.
//!
//! `dpl` is the decoupled, decomposed prototype head; `dpl_undecomposed`
//! and `fc` are the ablation baselines. New heads are added by registering
//! a factory under a name.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bank::{MissingPattern, PrototypeBank};
use crate::baselines::{self, FcHead, FcModel, UndecomposedBank};
use crate::data::{Sample, Task};
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::metrics::{self, EvalReport};
use crate::optim::{self, History, OptimConfig};
use crate::scoring::{self, candidate_patterns, Logits};

/// How a pattern-conditioned head picks its prototypes at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Routing {
    /// Use the sample's observed missing pattern.
    MissingAware,
    /// Ignore the observed pattern; keep the minimum-entropy candidate.
    MinEntropy,
}

/// Shape and seed handed to head factories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadShape {
    pub classes: usize,
    pub image_dim: usize,
    pub text_dim: usize,
    pub seed: u64,
}

pub trait Head: Send {
    fn name(&self) -> &'static str;

    fn fit(
        &mut self,
        train_set: &[Sample],
        task: Task,
        loss: &LossConfig,
        optim: &OptimConfig,
    ) -> Result<History>;

    fn logits(&self, sample: &Sample, routing: Routing) -> Result<Logits>;

    /// Writes the head's parameters, if it has a checkpoint format.
    fn save_checkpoint(&self, _path: &Path) -> Result<bool> {
        Ok(false)
    }
}

pub type HeadFactory = fn(&HeadShape) -> Result<Box<dyn Head>>;

#[derive(Clone)]
pub struct HeadRegistry {
    factories: BTreeMap<String, HeadFactory>,
}

impl Default for HeadRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl HeadRegistry {
    pub fn empty() -> Self {
        HeadRegistry { factories: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(DplHead::NAME, |s| Ok(Box::new(DplHead::new(s)?)));
        r.register(UndecomposedHead::NAME, |s| Ok(Box::new(UndecomposedHead::new(s)?)));
        r.register(FcStrategy::NAME, |s| Ok(Box::new(FcStrategy::new(s)?)));
        r
    }

    pub fn register(&mut self, name: &str, factory: HeadFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(&self, name: &str, shape: &HeadShape) -> Result<Box<dyn Head>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownHead(name.to_string()))?;
        factory(shape)
    }
}

fn drop_for(pattern: MissingPattern, sample: &Sample) -> (Option<&[f64]>, Option<&[f64]>) {
    (
        sample.image().filter(|_| pattern != MissingPattern::ImageMissing),
        sample.text().filter(|_| pattern != MissingPattern::TextMissing),
    )
}

/// Applies `routing` to a per-pattern scoring function.
fn route<F>(sample: &Sample, routing: Routing, score: F) -> Result<Logits>
where
    F: Fn(Option<&[f64]>, Option<&[f64]>, MissingPattern) -> Result<Logits>,
{
    match routing {
        Routing::MissingAware => score(sample.image(), sample.text(), sample.require_pattern()?),
        Routing::MinEntropy => {
            if sample.pattern().is_none() {
                return Err(Error::NoModalityPresent);
            }
            let candidates = candidate_patterns(sample.image.is_some(), sample.text.is_some())
                .into_iter()
                .map(|p| {
                    let (img, txt) = drop_for(p, sample);
                    score(img, txt, p)
                })
                .collect::<Result<Vec<_>>>()?;
            scoring::select_min_entropy(candidates)
        }
    }
}

pub struct DplHead {
    pub bank: PrototypeBank,
}

impl DplHead {
    pub const NAME: &'static str = "dpl";

    pub fn new(shape: &HeadShape) -> Result<Self> {
        if shape.image_dim != shape.text_dim {
            return Err(Error::ConfigInvalid(format!(
                "dpl head needs equal modality dims, got {} and {}",
                shape.image_dim, shape.text_dim
            )));
        }
        Ok(DplHead { bank: PrototypeBank::init(shape.classes, shape.image_dim, shape.seed)? })
    }
}

impl Head for DplHead {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn fit(&mut self, train_set: &[Sample], task: Task, loss: &LossConfig, optim: &OptimConfig) -> Result<History> {
        let (bank, history) = optim::train(self.bank.clone(), train_set, loss, optim, task)?;
        self.bank = bank;
        Ok(history)
    }

    fn logits(&self, sample: &Sample, routing: Routing) -> Result<Logits> {
        route(sample, routing, |img, txt, p| scoring::score(&self.bank, img, txt, p))
    }

    fn save_checkpoint(&self, path: &Path) -> Result<bool> {
        let file = std::fs::File::create(path)?;
        self.bank.write_checkpoint(std::io::BufWriter::new(file))?;
        Ok(true)
    }
}

pub struct UndecomposedHead {
    pub bank: UndecomposedBank,
}

impl UndecomposedHead {
    pub const NAME: &'static str = "dpl_undecomposed";

    pub fn new(shape: &HeadShape) -> Result<Self> {
        Ok(UndecomposedHead {
            bank: UndecomposedBank::init(shape.classes, shape.image_dim, shape.text_dim, shape.seed)?,
        })
    }
}

impl Head for UndecomposedHead {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn fit(&mut self, train_set: &[Sample], task: Task, loss: &LossConfig, optim: &OptimConfig) -> Result<History> {
        let (bank, history) = baselines::undecomposed_train(self.bank.clone(), train_set, loss, optim, task)?;
        self.bank = bank;
        Ok(history)
    }

    fn logits(&self, sample: &Sample, routing: Routing) -> Result<Logits> {
        route(sample, routing, |img, txt, p| baselines::undecomposed_score(&self.bank, img, txt, p))
    }
}

pub struct FcStrategy {
    pub head: FcHead,
}

impl FcStrategy {
    pub const NAME: &'static str = "fc";

    pub fn new(shape: &HeadShape) -> Result<Self> {
        Ok(FcStrategy { head: FcHead::init(shape.classes, shape.image_dim, shape.text_dim, shape.seed)? })
    }
}

impl Head for FcStrategy {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn fit(&mut self, train_set: &[Sample], task: Task, _loss: &LossConfig, optim: &OptimConfig) -> Result<History> {
        let mut model = FcModel { head: self.head.clone(), task };
        let history = optim::fit(&mut model, train_set, optim)?;
        self.head = model.head;
        Ok(history)
    }

    /// The FC head has no per-pattern parameters, so routing does not apply.
    fn logits(&self, sample: &Sample, _routing: Routing) -> Result<Logits> {
        Ok(Logits {
            values: baselines::fc_score(&self.head, sample.image(), sample.text()),
            pattern_used: sample.require_pattern()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Top1,
    F1Macro,
    /// Binary tasks only; ranks samples by `z_1 - z_0`.
    Auroc,
}

impl MetricKind {
    pub fn default_for(task: Task) -> MetricKind {
        match task {
            Task::Multiclass => MetricKind::Top1,
            Task::Multilabel => MetricKind::F1Macro,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Top1 => "top1",
            MetricKind::F1Macro => "f1_macro",
            MetricKind::Auroc => "auroc",
        }
    }
}

/// Scores precomputed logits against the samples' labels.
pub fn metric_from_logits(
    logits: &[Vec<f64>],
    samples: &[Sample],
    task: Task,
    metric: MetricKind,
) -> Result<EvalReport> {
    match (metric, task) {
        (MetricKind::Top1, Task::Multiclass) => {
            let pred: Vec<usize> = logits.iter().map(|z| scoring::decide_multiclass(z)).collect();
            let truth = samples.iter().map(|s| s.label.class()).collect::<Result<Vec<_>>>()?;
            metrics::top1_accuracy(&pred, &truth)
        }
        (MetricKind::F1Macro, Task::Multilabel) => {
            let pred = logits
                .iter()
                .map(|z| scoring::decide_multilabel(z, scoring::DEFAULT_THRESHOLD))
                .collect::<Result<Vec<_>>>()?;
            let truth = samples
                .iter()
                .map(|s| s.label.multi().map(<[bool]>::to_vec))
                .collect::<Result<Vec<_>>>()?;
            metrics::f1_macro(&pred, &truth)
        }
        (MetricKind::Auroc, Task::Multiclass) => {
            if logits.first().is_some_and(|z| z.len() != 2) {
                return Err(Error::ConfigInvalid("auroc needs exactly 2 classes".into()));
            }
            let scores: Vec<f64> = logits.iter().map(|z| z[1] - z[0]).collect();
            let truth = samples
                .iter()
                .map(|s| s.label.class().map(|c| c == 1))
                .collect::<Result<Vec<_>>>()?;
            metrics::auroc(&scores, &truth)
        }
        (m, t) => Err(Error::ConfigInvalid(format!("metric {} does not apply to {t:?}", m.name()))),
    }
}

/// The task's default metric value.
pub(crate) fn task_metric(logits: &[Vec<f64>], samples: &[Sample], task: Task) -> Result<f64> {
    Ok(metric_from_logits(logits, samples, task, MetricKind::default_for(task))?.value)
}

pub(crate) fn evaluate_bank(bank: &PrototypeBank, samples: &[Sample], task: Task, routing: Routing) -> Result<f64> {
    let head = DplHead { bank: bank.clone() };
    let logits = samples
        .iter()
        .map(|s| Ok(head.logits(s, routing)?.values))
        .collect::<Result<Vec<_>>>()?;
    task_metric(&logits, samples, task)
}

/// Logits of every sample under `routing`.
pub fn predict(head: &dyn Head, samples: &[Sample], routing: Routing) -> Result<Vec<Logits>> {
    samples.iter().map(|s| head.logits(s, routing)).collect()
}

pub fn evaluate(
    head: &dyn Head,
    samples: &[Sample],
    task: Task,
    routing: Routing,
    metric: MetricKind,
) -> Result<EvalReport> {
    let logits: Vec<Vec<f64>> = predict(head, samples, routing)?.into_iter().map(|l| l.values).collect();
    metric_from_logits(&logits, samples, task, metric)
}
