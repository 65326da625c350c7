//! Likelihood, priors, Langevin updates and the data-augmentation Gibbs drivers.

mod chain;
mod checkpoint;
mod mala;
mod model;
mod target;

pub use chain::{run_fixed, run_stochastic, ChainOutput, QMethod, Sample, Sampler, SamplerConfig};
pub use checkpoint::{read_checkpoint, write_checkpoint, RngPosition, CHECKPOINT_VERSION};
pub use mala::{mala_step, Adaptation, ChainPoint, StepInfo, Tuning};
pub use model::{ModelSpec, Prior, Priors};
pub use target::{log_target, LatentState, Layout, StateGradient, TargetEval};
