//! Decoupled prototype learning for multimodal classification with missing
//! modalities.
//!
//! Each class keeps a separate prototype for complete, image-missing and
//! text-missing inputs, and each prototype is split into independently
//! normalized image and text components. Logits are cosine similarities
//! against the components the sample's missing pattern selects.

pub mod bank;
pub mod baselines;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod heads;
pub mod losses;
pub mod metrics;
pub mod numerics;
pub mod optim;
pub mod oracle;
pub mod rng;
pub mod scoring;

pub use bank::{ComponentKey, MissingPattern, Modality, PrototypeBank};
pub use data::{Dataset, Label, Sample, Scenario, SyntheticSpec, Task};
pub use error::{Error, Result};
pub use heads::{Head, HeadRegistry, HeadShape, MetricKind, Routing};
pub use losses::{LossConfig, LossValueAndGrad, ScaleMargin};
pub use optim::OptimConfig;
pub use scoring::Logits;
