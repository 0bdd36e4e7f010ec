//! Backstepping boundary control of the linearized two-class Aw-Rascle
//! traffic model.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! - [`model`]: nonlinear model, equilibria, Jacobians, characteristic speeds
//! - [`riemann`]: diagonalized design model and boundary matrices
//! - [`kernel`]: backstepping kernels on the triangular domain
//! - [`controller`]: outlet feedback gains and the backstepping transform
//! - [`sim`]: upwind simulation of open and closed loop
//! - [`scenario`], [`pipeline`], [`cli`]: configuration, runs and outputs

pub mod cli;
pub mod controller;
pub mod error;
pub mod kernel;
pub mod model;
pub mod output;
pub mod pipeline;
pub mod riemann;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
pub use kernel::{DesignModel, KernelConfig, KernelSolution};
pub use model::{CharacteristicBasis, EquilibriumState, ModelParams, Regime};
pub use pipeline::Design;
pub use riemann::RiemannSystem;
pub use scenario::Scenario;
pub use sim::{Mode, SimConfig, SimResult};
