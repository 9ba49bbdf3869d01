//! Phase-switching controller: VPP hip torque in stance, PD leg-angle servo
//! plus leg retraction in flight, and a once-per-step angle-of-attack update.

use serde::{Deserialize, Serialize};

use crate::error::{HopperError, Result};
use crate::model::{
    hip_position, hip_velocity, leg_vector, ControlInput, ModelParams, Phase, SystemState, Vec2,
};
use crate::num::{lit, Real};

/// Lower/upper margin (rad) keeping the desired angle of attack inside (0, pi).
pub const PHI_DES_MARGIN: f64 = 0.1;

/// How `l0_swing` maps to the flight rest-length offset `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetractionMode {
    /// `l0_swing` is the flight rest length itself: `xi = l0_swing - l_0`.
    Absolute,
    /// `l0_swing` is the retraction amount: `xi = -l0_swing`.
    Relative,
}

impl std::str::FromStr for RetractionMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "absolute" => Ok(Self::Absolute),
            "relative" => Ok(Self::Relative),
            other => Err(format!("unknown retraction mode '{other}' (expected absolute|relative)")),
        }
    }
}

impl std::fmt::Display for RetractionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Absolute => "absolute",
            Self::Relative => "relative",
        })
    }
}

/// Controller gains and set points. Angles are in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams<T> {
    /// Swing angular stiffness (N m/rad).
    pub c: T,
    /// Swing angular damping (N m s/rad).
    pub b: T,
    /// Nominal angle of attack (rad).
    pub phi_0: T,
    /// Forward-velocity feedback gain (rad s/m).
    pub k_gain: T,
    /// CoM-to-VPP distance along the body axis (m).
    pub d_vpp: T,
    /// VPP offset angle from the body axis (rad).
    pub delta: T,
    /// Desired forward CoM velocity (m/s).
    pub vx_des: T,
    /// Swing-leg retraction set point (m), interpreted per `retraction`.
    pub l0_swing: T,
    pub retraction: RetractionMode,
}

impl<T: Real> ControlParams<T> {
    /// Reference gains, set at the interior limit-cycle candidate
    /// `(vx_des, l0_swing) = (5.0, 0.087)`.
    pub fn reference() -> Self {
        Self {
            c: lit(1900.0),
            b: lit(80.37),
            phi_0: lit(70.0f64.to_radians()),
            k_gain: lit(0.15),
            d_vpp: lit(0.25),
            delta: T::zero(),
            vx_des: lit(5.0),
            l0_swing: lit(0.087),
            retraction: RetractionMode::Relative,
        }
    }

    /// Rest-length offset commanded during flight.
    pub fn swing_xi(&self, mp: &ModelParams<T>) -> T {
        match self.retraction {
            RetractionMode::Absolute => self.l0_swing - mp.l_0,
            RetractionMode::Relative => -self.l0_swing,
        }
    }

    pub fn validate(&self, mp: &ModelParams<T>) -> Result<()> {
        let bad = |msg: String| Err(HopperError::InvalidParameter(msg));
        if !(self.c > T::zero()) {
            return bad(format!("swing stiffness c must be > 0, got {}", self.c));
        }
        if !(self.b > T::zero()) {
            return bad(format!("swing damping b must be > 0, got {}", self.b));
        }
        if !(self.phi_0 > T::zero() && self.phi_0 < T::PI()) {
            return bad(format!("phi_0 must lie in (0, pi) rad, got {}", self.phi_0));
        }
        if !(self.l0_swing > T::zero()) {
            return bad(format!("l0_swing must be > 0, got {}", self.l0_swing));
        }
        let rest = mp.l_0 + self.swing_xi(mp);
        if !(rest > T::zero()) {
            return bad(format!("flight rest length l_0 + xi = {rest} must be > 0"));
        }
        for (name, v) in [("K", self.k_gain), ("d_vpp", self.d_vpp), ("delta", self.delta), ("vx_des", self.vx_des)] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
        }
        Ok(())
    }
}

impl<T: Real> Default for ControlParams<T> {
    fn default() -> Self {
        Self::reference()
    }
}

/// Per-run controller memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState<T> {
    /// Desired angle of attack for the current/next swing (rad).
    pub phi_des: T,
    pub phase: Phase,
}

impl<T: Real> ControllerState<T> {
    pub fn new(phi_des: T, phase: Phase) -> Self {
        Self { phi_des, phase }
    }
}

pub fn vpp_point<T: Real>(state: &SystemState<T>, cp: &ControlParams<T>) -> Vec2<T> {
    let (s, c) = (state.theta + cp.delta).sin_cos();
    state.r_c + Vec2::new(s, c) * cp.d_vpp
}

/// VPP hip torque: redirects the leg force at the hip through the VPP.
///
/// `tau = F l tan(gamma)` where `gamma` is the signed angle between the
/// foot->VPP and foot->hip vectors and `F` the (signed, compression
/// positive) spring force magnitude at `xi = 0`.
pub fn stance_torque<T: Real>(state: &SystemState<T>, mp: &ModelParams<T>, cp: &ControlParams<T>) -> Result<T> {
    let (r_l, l) = leg_vector(state, mp)?;
    let r_vpp = vpp_point(state, cp) - state.r_f;
    let dot = r_vpp.dot(r_l);
    if !(dot > T::zero()) {
        let cosang = dot / (r_vpp.norm() * l);
        return Err(HopperError::VppSingular {
            dot: dot.to_f64_lossy(),
            angle_deg: cosang.to_f64_lossy().clamp(-1.0, 1.0).acos().to_degrees(),
        });
    }
    let tan_gamma = r_vpp.cross(r_l) / dot;
    let force = mp.k * (mp.l_0 - l);
    Ok(force * l * tan_gamma)
}

/// Angle of attack and its rate.
///
/// Measured between the ground and the hip->foot axis: `pi/2` for a vertical
/// leg, smaller when the foot is ahead of the hip.
pub fn leg_angle<T: Real>(state: &SystemState<T>, mp: &ModelParams<T>) -> Result<(T, T)> {
    leg_vector(state, mp)?;
    let hip = hip_position(state, mp);
    let v_hip = hip_velocity(state, mp);
    let a = hip.y - state.r_f.y;
    let b = state.r_f.x - hip.x;
    let a_dot = v_hip.y - state.v_f.y;
    let b_dot = state.v_f.x - v_hip.x;
    let phi = a.atan2(b);
    let phi_dot = (b * a_dot - a * b_dot) / (a * a + b * b);
    Ok((phi, phi_dot))
}

/// PD servo on the angle of attack.
pub fn swing_torque<T: Real>(
    state: &SystemState<T>,
    cs: &ControllerState<T>,
    cp: &ControlParams<T>,
    mp: &ModelParams<T>,
) -> Result<T> {
    let (phi, phi_dot) = leg_angle(state, mp)?;
    Ok(cp.c * (cs.phi_des - phi) - cp.b * phi_dot)
}

/// Raibert-style angle-of-attack update, clamped to `(0.1, pi - 0.1)`.
pub fn update_angle_of_attack<T: Real>(vx_touchdown: T, cp: &ControlParams<T>) -> T {
    let raw = cp.phi_0 + cp.k_gain * (cp.vx_des - vx_touchdown);
    let lo: T = lit(PHI_DES_MARGIN);
    let hi = T::PI() - lo;
    if raw < lo || raw > hi || raw.is_nan() {
        log::warn!("angle of attack {raw} rad clamped to [{lo}, {hi}]");
        if raw > hi {
            hi
        } else {
            lo
        }
    } else {
        raw
    }
}

/// Switching control law.
pub fn control_action<T: Real>(
    state: &SystemState<T>,
    cs: &ControllerState<T>,
    mp: &ModelParams<T>,
    cp: &ControlParams<T>,
) -> Result<ControlInput<T>> {
    match cs.phase {
        Phase::Stance => Ok(ControlInput::new(stance_torque(state, mp, cp)?, T::zero())),
        Phase::Flight => Ok(ControlInput::new(swing_torque(state, cs, cp, mp)?, cp.swing_xi(mp))),
    }
}
