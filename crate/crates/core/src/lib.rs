//! What-if analysis over tabular KPI data.
//!
//! Pick a KPI column and its candidate drivers, learn the driver→KPI
//! relationship, rank drivers by importance, perturb drivers to see the KPI
//! move, and invert the model to find driver changes that reach a goal.

pub mod api;
pub mod dataset;
pub mod error;
pub mod goalseek;
pub mod importance;
pub mod model;
pub mod rng;
pub mod sensitivity;
pub mod synth;

pub use dataset::{make_frame, parse_csv, serialize_csv, AnalysisFrame, ColumnKind, ColumnSchema, Dataset, KpiKind};
pub use error::{Error, ErrorClass, Result};
pub use goalseek::{optimize_goal, GoalResult, GoalSpec, Objective};
pub use model::{train, Hyperparameters, ModelKind, TrainedModel};
pub use sensitivity::{run_sensitivity, PerturbationMode, PerturbationSpec, SensitivityResult};
pub use synth::{generate_synthetic, GroundTruth, UseCase};
