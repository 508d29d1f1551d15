//! Equal Improvability fairness: disparity metrics, effort-aware training penalties, a
//! two-group dynamics simulator and analytic reference solutions.

pub mod data;
pub mod dynamics;
pub mod effort;
pub mod error;
pub mod metrics;
pub mod models;
pub mod oracles;
pub mod penalties;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod trainer;

pub use data::{Dataset, FeaturePartition, SchemaConfig, SyntheticConfig};
pub use effort::{BestResponse, EffortBudget, NormKind, PgdConfig};
pub use error::{Error, ErrorKind, Result};
pub use dynamics::{DynamicsConfig, GroupGaussianState, Policy, ThresholdPair, Trajectory};
pub use models::{GlmScorer, MlpScorer, Scorer};
pub use metrics::{DisparityReport, EvalOptions};
pub use oracles::{GaussianAwareClassifier, PiecewiseUniform};
pub use penalties::{PenaltyKind, PenaltyTag};
pub use trainer::{ModelSpec, OptimizerKind, TrainConfig, TrainedModel};
