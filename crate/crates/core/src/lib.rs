//! Online training of thin-plate RBF surrogates for expensive models, with
//! validity testing against sampled data and asymptotic convergence
//! detection.

pub mod bounds;
pub mod distance;
pub mod error;
pub mod experiment;
mod linalg;
pub mod models;
pub mod optimize;
pub mod rbf;
pub mod samplers;
pub mod store;
pub mod validity;
pub mod workflow;

pub use bounds::Bounds;
pub use error::{Error, FitError, Result};
pub use models::{model_by_id, Model, ModelSpec};
pub use rbf::{Fingerprint, Hyperparams, Kernel, Predictor, Surrogate};
pub use distance::{DistanceMode, DistanceReport};
pub use experiment::{BenchConfig, ExperimentConfig};
pub use optimize::{SolverConfig, SolverTrace};
pub use samplers::{EnsembleSize, SamplerConfig, Strategy};
pub use store::{Dataset, EvalRecord, EvalStore, Source};
pub use validity::{ExtremaRegistry, Preset, ToleranceConfig};
pub use workflow::{IterationSummary, SurrogateDb, Termination, WorkflowConfig, WorkflowResult};

