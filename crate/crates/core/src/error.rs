use thiserror::Error;

/// Errors raised by the dynamics, controllers and integrator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HopperError {
    #[error("singular leg configuration: leg length {length:e} m below 1e-9 m")]
    SingularLeg { length: f64 },

    #[error("VPP controller singular: foot->VPP and leg axis are {angle_deg:.1} deg apart (dot product {dot:e})")]
    VppSingular { dot: f64, angle_deg: f64 },

    #[error("touchdown impact applied while already in stance")]
    ImpactInStance,

    #[error("step size underflow at t = {t:e} s (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("maximum integration time {t_max} s exceeded")]
    MaxTimeExceeded { t_max: f64 },

    #[error("state became non-finite at t = {t:e} s")]
    NonFinite { t: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigenvalue iteration did not converge within {sweeps} sweeps")]
    EigenNoConvergence { sweeps: usize },

    #[error("no guard functions supplied")]
    NoGuards,
}

pub type Result<T, E = HopperError> = std::result::Result<T, E>;
