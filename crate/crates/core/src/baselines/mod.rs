//! Comparison heads for the ablations: a plain fully-connected layer and
//! prototypes without modality decomposition.

mod fc;
mod undecomposed;

pub use fc::{fc_objective, fc_score, fc_train, FcHead};
pub(crate) use fc::FcModel;
pub use undecomposed::{
    undecomposed_objective, undecomposed_score, undecomposed_train, UndecomposedBank,
};
