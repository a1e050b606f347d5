//! Samples, missing-modality simulation, the synthetic feature generator and
//! the DPLF feature file format.

mod features;
mod missing;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::bank::MissingPattern;
use crate::error::{Error, Result};

pub use features::{load_features, read_features, write_features, FEATURE_MAGIC, FEATURE_VERSION};
pub use missing::{missing_counts, simulate_missing, train_test_split, Scenario};
pub use synthetic::{gen_synthetic, SyntheticSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Multiclass,
    Multilabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Label {
    Class(usize),
    Multi(Vec<bool>),
}

impl Label {
    pub fn class(&self) -> Result<usize> {
        match self {
            Label::Class(c) => Ok(*c),
            Label::Multi(_) => Err(Error::LabelKind),
        }
    }

    pub fn multi(&self) -> Result<&[bool]> {
        match self {
            Label::Multi(v) => Ok(v),
            Label::Class(_) => Err(Error::LabelKind),
        }
    }
}

/// One instance: per-modality features (`None` when the modality is
/// missing) and its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Option<Vec<f64>>,
    pub text: Option<Vec<f64>>,
    pub label: Label,
}

impl Sample {
    pub fn complete(image: Vec<f64>, text: Vec<f64>, label: Label) -> Self {
        Sample { image: Some(image), text: Some(text), label }
    }

    pub fn image(&self) -> Option<&[f64]> {
        self.image.as_deref()
    }

    pub fn text(&self) -> Option<&[f64]> {
        self.text.as_deref()
    }

    /// `None` only when both modalities are missing.
    pub fn pattern(&self) -> Option<MissingPattern> {
        MissingPattern::from_presence(self.image.is_some(), self.text.is_some())
    }

    pub fn require_pattern(&self) -> Result<MissingPattern> {
        self.pattern().ok_or(Error::NoModalityPresent)
    }
}

/// Samples plus the shape metadata a feature file carries.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: Task,
    pub classes: usize,
    pub image_dim: usize,
    pub text_dim: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn with_samples(&self, samples: Vec<Sample>) -> Dataset {
        Dataset { samples, ..self.clone() }
    }

    pub fn pattern_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for s in &self.samples {
            if let Some(p) = s.pattern() {
                counts[p.index()] += 1;
            }
        }
        counts
    }
}
