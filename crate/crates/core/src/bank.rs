//! Decoupled, modality-decomposed class prototypes.
//!
//! Each class owns one prototype per missing pattern, and each of those is
//! split into an image component and a text component. All six components
//! are stored raw and normalized independently on read.

use std::io::{Read, Write};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, EPS_NORM};
use crate::rng;

/// Which modalities of a sample are observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPattern {
    Complete,
    ImageMissing,
    TextMissing,
}

impl MissingPattern {
    pub const ALL: [MissingPattern; 3] = [
        MissingPattern::Complete,
        MissingPattern::ImageMissing,
        MissingPattern::TextMissing,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_presence(image: bool, text: bool) -> Option<MissingPattern> {
        match (image, text) {
            (true, true) => Some(MissingPattern::Complete),
            (false, true) => Some(MissingPattern::ImageMissing),
            (true, false) => Some(MissingPattern::TextMissing),
            (false, false) => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MissingPattern::Complete => "complete",
            MissingPattern::ImageMissing => "image_missing",
            MissingPattern::TextMissing => "text_missing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Image,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::Image, Modality::Text];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Components per class: 3 patterns x 2 modalities.
pub const COMPONENTS_PER_CLASS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ComponentKey {
    pub class_index: usize,
    pub pattern: MissingPattern,
    pub modality: Modality,
}

impl ComponentKey {
    pub fn new(class_index: usize, pattern: MissingPattern, modality: Modality) -> Self {
        ComponentKey { class_index, pattern, modality }
    }

    /// Position of this component within its class, in `(pattern, modality)`
    /// row-major order.
    pub fn slot(&self) -> usize {
        self.pattern.index() * 2 + self.modality.index()
    }

    /// Iterates all six component slots of one class in storage order.
    pub fn class_components(class_index: usize) -> impl Iterator<Item = ComponentKey> {
        MissingPattern::ALL.into_iter().flat_map(move |p| {
            Modality::ALL
                .into_iter()
                .map(move |m| ComponentKey::new(class_index, p, m))
        })
    }
}

/// Raw prototype parameters laid out `(class, pattern, modality, dim)`
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    classes: usize,
    dim: usize,
    params: Vec<f64>,
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DPLB";
pub const CHECKPOINT_VERSION: u32 = 1;

impl PrototypeBank {
    /// Draws every component uniformly on the unit sphere.
    pub fn init(classes: usize, dim: usize, seed: u64) -> Result<Self> {
        if classes < 1 || dim < 1 {
            return Err(Error::InvalidShape(format!("K={classes}, d={dim}")));
        }
        let mut stream = rng::stream(seed);
        let mut params = Vec::with_capacity(classes * COMPONENTS_PER_CLASS * dim);
        for _ in 0..classes * COMPONENTS_PER_CLASS {
            let unit = loop {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut stream)).collect();
                if let Ok(u) = numerics::l2_normalize(&v) {
                    break u;
                }
            };
            params.extend(unit);
        }
        Ok(PrototypeBank { classes, dim, params })
    }

    pub fn from_params(classes: usize, dim: usize, params: Vec<f64>) -> Result<Self> {
        if classes < 1 || dim < 1 {
            return Err(Error::InvalidShape(format!("K={classes}, d={dim}")));
        }
        if params.len() != classes * COMPONENTS_PER_CLASS * dim {
            return Err(Error::InvalidShape(format!(
                "expected {} parameters, got {}",
                classes * COMPONENTS_PER_CLASS * dim,
                params.len()
            )));
        }
        Ok(PrototypeBank { classes, dim, params })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check(&self, key: &ComponentKey) -> Result<()> {
        if key.class_index >= self.classes {
            return Err(Error::KeyOutOfRange(format!(
                "class {} >= K={}",
                key.class_index, self.classes
            )));
        }
        Ok(())
    }

    /// Offset of `key` in the flat parameter vector.
    pub fn offset(&self, key: &ComponentKey) -> usize {
        (key.class_index * COMPONENTS_PER_CLASS + key.slot()) * self.dim
    }

    pub fn raw_component(&self, key: &ComponentKey) -> Result<&[f64]> {
        self.check(key)?;
        let start = self.offset(key);
        Ok(&self.params[start..start + self.dim])
    }

    pub fn set_component(&mut self, key: &ComponentKey, values: &[f64]) -> Result<()> {
        self.check(key)?;
        if values.len() != self.dim {
            return Err(Error::InvalidShape(format!(
                "component length {} != d={}",
                values.len(),
                self.dim
            )));
        }
        let start = self.offset(key);
        self.params[start..start + self.dim].copy_from_slice(values);
        Ok(())
    }

    pub fn normalized_component(&self, key: &ComponentKey) -> Result<Vec<f64>> {
        numerics::l2_normalize(self.raw_component(key)?)
    }

    /// Whole-vector normalization of the `[image; text]` concatenation for
    /// one class and pattern. Only the un-decomposed ablation uses this.
    pub fn concat_normalized(&self, class_index: usize, pattern: MissingPattern) -> Result<Vec<f64>> {
        let image = self.raw_component(&ComponentKey::new(class_index, pattern, Modality::Image))?;
        let text = self.raw_component(&ComponentKey::new(class_index, pattern, Modality::Text))?;
        let joined: Vec<f64> = image.iter().chain(text).copied().collect();
        numerics::l2_normalize(&joined)
    }

    /// Smallest component norm in the bank.
    pub fn min_component_norm(&self) -> f64 {
        self.params
            .chunks(self.dim)
            .map(numerics::norm)
            .fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn check_norms(&self) -> Result<()> {
        let min = self.min_component_norm();
        if !(min > EPS_NORM) {
            return Err(Error::NormTooSmall { norm: min });
        }
        Ok(())
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(self.classes as u32).to_le_bytes())?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.params.len() * 8);
        for p in &self.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() < 16 {
            return Err(Error::TruncatedFile);
        }
        if &bytes[0..4] != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic { expected: "DPLB" });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
        }
        let (classes, dim) = (word(8) as usize, word(12) as usize);
        if classes == 0 || dim == 0 {
            return Err(Error::InconsistentHeader(format!("K={classes}, d={dim}")));
        }
        let expected = classes * COMPONENTS_PER_CLASS * dim * 8;
        let payload = &bytes[16..];
        if payload.len() < expected {
            return Err(Error::TruncatedFile);
        }
        if payload.len() > expected {
            return Err(Error::InconsistentHeader("trailing bytes after payload".into()));
        }
        let params = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        PrototypeBank::from_params(classes, dim, params)
    }
}
