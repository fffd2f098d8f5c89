//! Coupled gradient flow of the Dirichlet energy in both the map and the flat
//! domain metric of a torus: heat flow of a manifold-constrained map paired
//! with horizontal motion of the unit-area metric, plus the supporting
//! tensor calculus, the projection onto holomorphic quadratic differentials,
//! energy and bubbling diagnostics, and a deterministic run harness.

pub mod check;
pub mod config;
pub mod elliptic;
pub mod error;
pub mod flow;
pub mod grid;
pub mod io;
pub mod metric;
pub mod ops;
pub mod projection;
pub mod rng;
pub mod run;
pub mod scenario;
pub mod target;
pub mod tensor;

pub use config::{parse_config, RunConfig};
pub use error::{Error, Result};
pub use flow::{FlowConfig, FlowEngine, FlowState};
pub use grid::{build_grid, EmbeddedField, Grid, ScalarField, VectorField2};
pub use metric::{MetricField, TeichParams};
pub use run::{run_scenario, Simulator};
pub use target::TargetManifold;
pub use tensor::SymTensorField;
