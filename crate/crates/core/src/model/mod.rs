//! The additive ensemble: one CNN sub-network per feature map, tanh heads,
//! and a shared bias passed through the inverse link.

mod config;
mod epu;
mod subnet;

pub use config::{ArchConfig, Mode};
pub use epu::{
    build_model, combine_binary, combine_multiclass, stack_inputs, EnsembleForward, EpuModel, StepStats,
    Explanation, Prediction, RssVector,
};
pub use subnet::{SubNetwork, SubnetOutput};
