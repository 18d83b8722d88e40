//! Statistical versus interventional forecast risk for vector autoregressive
//! models.
//!
//! The crate computes the ω-step statistical risk `S` of a fitted VAR model,
//! its risk `G` under do-interventions on past values, the exact gap between
//! the two, and a family of bounds on that gap driven by the condition number
//! and the stability of the process. It also ships estimators and an
//! experiment harness for the accompanying simulation study.

pub mod bounds;
pub mod companion;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod intervention;
pub mod linalg;
pub mod process;
pub mod risk;
pub mod seed;

pub use companion::{CompanionMatrix, Partition, Spectrum};
pub use error::{Error, Result};
pub use estimators::{Estimator, FitResult, LaggedDesign};
pub use harness::{BucketSummary, ExperimentConfig, ExperimentRecord, Mode};
pub use intervention::{InterventionKind, InterventionSpec, InterventionalCov};
pub use process::{AutocovMatrix, NoiseDist, SamplePath, VarModel};
pub use risk::{ModelPair, RiskReport};
pub use bounds::{BoundName, BoundReport};
