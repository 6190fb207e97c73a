//! Catalogs of kernels, velocity laws and initial data, plus the hypothesis
//! checkers for velocity laws.

pub mod conditions;
pub mod datum;
pub mod kernel;
pub mod velocity;

pub use conditions::{check_velocity_conditions, ConditionReport, Curvature};
pub use datum::InitialDatum;
pub use kernel::{KernelFamily, KernelSpec};
pub use velocity::VelocityModel;
