//! Agent-based graph classifier and the experiments built on it.

pub mod checks;
pub mod error;
pub mod experiments;
pub mod model;
pub mod noise;
pub mod train;

pub use error::{CoreError, Result};
pub use model::{AgentNet, Ablations, ModelConfig, Rollout, RolloutOptions, Variant};
pub use noise::{KeyedNoise, NoiseSource, SeededNoise};
pub use train::{DatasetSpec, ExperimentConfig, Metrics, SeedResult, Split};
