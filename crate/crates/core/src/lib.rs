//! Hybrid dynamics, switching control and orbital-stability analysis for a
//! planar trunk-SLIP hopper with a massive point foot and a retractable
//! spring leg.
//!
//! Everything numeric is generic over [`Real`] (`f32`/`f64`); the `*64`
//! aliases below fix the scalar to `f64`, which the default tolerances
//! assume.

pub mod control;
pub mod error;
pub mod export;
pub mod hybrid;
pub mod linalg;
pub mod model;
pub mod num;
pub mod ode;
pub mod stability;

pub use control::{ControlParams, ControllerState, RetractionMode};
pub use error::{HopperError, Result};
pub use hybrid::{
    CycleRecord, EventKind, FallOutcome, FallReason, GaitEvent, Outcome, SimOptions, SimulationResult,
    Trajectory,
};
pub use model::{ControlInput, ModelParams, Phase, SystemState, Vec2};
pub use num::Real;
pub use ode::Tolerances;
pub use linalg::Matrix;
pub use stability::{
    ConvergenceRecord, FixedPoint, GridAxis, NewtonOptions, ReducedState, StabilityError, StabilityReport, SweepCell,
    Verdict, VelocityMap,
};

pub type Vec2f64 = Vec2<f64>;
pub type State64 = SystemState<f64>;
pub type ModelParams64 = ModelParams<f64>;
pub type ControlParams64 = ControlParams<f64>;
pub type SimOptions64 = SimOptions<f64>;
pub type Reduced64 = ReducedState<f64>;
pub type Matrix64 = Matrix<f64>;
pub type StabilityReport64 = StabilityReport<f64>;
