//! Hopper model: trunk with an offset hip, a massive point foot, and a
//! variable-rest-length spring leg with a parallel hip motor.
//!
//! Frame: world x forward, y up, ground at `y = 0`. The trunk inclination
//! `theta` is zero when upright and positive when the trunk top leans
//! towards `+x`, which puts the hip at `r_c + (-d sin(theta), -d cos(theta))`.
//! A positive hip torque `tau` turns the leg so that its angle of attack
//! (see [`crate::control::leg_angle`]) grows, i.e. hip extension; the
//! trunk receives the opposite torque.
//!
//! The massless leg transmits the spring force `F` plus a tangential
//! component produced by the hip motor. The foot receives `-F + F_tau`
//! and the trunk receives the reaction `F - F_tau` at the hip, so total
//! linear and angular momentum are conserved in flight.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{HopperError, Result};
use crate::num::{lit, Real};

/// Leg lengths below this are treated as a singular configuration.
pub const SINGULAR_LEG_LENGTH: f64 = 1e-9;

/// Number of scalar components in a flattened [`SystemState`].
pub const STATE_DIM: usize = 10;

/// Planar vector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Vec2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// Scalar (z-component) cross product `self x o`.
    #[inline]
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    /// Counter-clockwise quarter turn.
    #[inline]
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl<T: Real> Add for Vec2<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> AddAssign for Vec2<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl<T: Real> Sub for Vec2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Real> SubAssign for Vec2<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl<T: Real> Mul<T> for Vec2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl<T: Real> Neg for Vec2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Full hybrid state. The same layout is used for its time derivative.
///
/// Flattened order: `[x_c, y_c, x_f, y_f, theta, vx_c, vy_c, vx_f, vy_f, omega]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemState<T> {
    pub r_c: Vec2<T>,
    pub r_f: Vec2<T>,
    pub theta: T,
    pub v_c: Vec2<T>,
    pub v_f: Vec2<T>,
    pub omega: T,
}

impl<T: Real> SystemState<T> {
    pub fn to_array(&self) -> [T; STATE_DIM] {
        [
            self.r_c.x, self.r_c.y, self.r_f.x, self.r_f.y, self.theta, self.v_c.x, self.v_c.y,
            self.v_f.x, self.v_f.y, self.omega,
        ]
    }

    pub fn from_array(a: &[T; STATE_DIM]) -> Self {
        Self {
            r_c: Vec2::new(a[0], a[1]),
            r_f: Vec2::new(a[2], a[3]),
            theta: a[4],
            v_c: Vec2::new(a[5], a[6]),
            v_f: Vec2::new(a[7], a[8]),
            omega: a[9],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Rigid horizontal translation of both bodies.
    pub fn shifted_x(&self, dx: T) -> Self {
        let mut s = *self;
        s.r_c.x += dx;
        s.r_f.x += dx;
        s
    }
}

/// Mechanical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    /// Trunk mass (kg).
    pub m_c: T,
    /// Foot mass (kg).
    pub m_f: T,
    /// Trunk moment of inertia about its CoM (kg m^2).
    pub j: T,
    /// CoM-to-hip distance (m).
    pub d: T,
    /// Leg spring stiffness (N/m).
    pub k: T,
    /// Nominal spring rest length (m).
    pub l_0: T,
    /// Gravitational acceleration (m/s^2).
    pub g: T,
}

impl<T: Real> ModelParams<T> {
    /// Reference human-scale hopper.
    pub fn reference() -> Self {
        Self {
            m_c: lit(80.0),
            m_f: lit(3.4),
            j: lit(5.0),
            d: lit(0.1),
            k: lit(21_000.0),
            l_0: lit(1.0),
            g: lit(9.81),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("m_c", self.m_c),
            ("m_f", self.m_f),
            ("J", self.j),
            ("d", self.d),
            ("k", self.k),
            ("l_0", self.l_0),
            ("g", self.g),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > T::zero()) {
                return Err(HopperError::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if self.d >= self.l_0 {
            return Err(HopperError::InvalidParameter(format!(
                "hip offset d = {} must be shorter than l_0 = {}",
                self.d, self.l_0
            )));
        }
        Ok(())
    }

    pub fn total_mass(&self) -> T {
        self.m_c + self.m_f
    }
}

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        Self::reference()
    }
}

/// Actuator commands: hip torque and spring rest-length offset.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput<T> {
    pub tau: T,
    pub xi: T,
}

impl<T: Real> ControlInput<T> {
    pub fn new(tau: T, xi: T) -> Self {
        Self { tau, xi }
    }
}

/// Discrete contact mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Flight,
    Stance,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Flight => "flight",
            Phase::Stance => "stance",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// CoM-to-hip offset for trunk angle `theta`.
#[inline]
pub fn hip_offset<T: Real>(theta: T, mp: &ModelParams<T>) -> Vec2<T> {
    let (s, c) = theta.sin_cos();
    Vec2::new(-mp.d * s, -mp.d * c)
}

#[inline]
pub fn hip_position<T: Real>(state: &SystemState<T>, mp: &ModelParams<T>) -> Vec2<T> {
    state.r_c + hip_offset(state.theta, mp)
}

#[inline]
pub fn hip_velocity<T: Real>(state: &SystemState<T>, mp: &ModelParams<T>) -> Vec2<T> {
    let (s, c) = state.theta.sin_cos();
    state.v_c + Vec2::new(-mp.d * c, mp.d * s) * state.omega
}

/// Foot-to-hip leg vector and its length.
pub fn leg_vector<T: Real>(state: &SystemState<T>, mp: &ModelParams<T>) -> Result<(Vec2<T>, T)> {
    let r_l = hip_position(state, mp) - state.r_f;
    let l = r_l.norm();
    if !(l >= lit(SINGULAR_LEG_LENGTH)) {
        return Err(HopperError::SingularLeg {
            length: l.to_f64_lossy(),
        });
    }
    Ok((r_l, l))
}

/// Counter-clockwise angular rate of the leg axis.
pub fn leg_axis_rate<T: Real>(state: &SystemState<T>, mp: &ModelParams<T>) -> Result<T> {
    let (r_l, l) = leg_vector(state, mp)?;
    let rel_v = hip_velocity(state, mp) - state.v_f;
    Ok(r_l.cross(rel_v) / (l * l))
}

/// Spring force acting on the trunk (at the hip); the foot receives its negative.
pub fn spring_force<T: Real>(state: &SystemState<T>, xi: T, mp: &ModelParams<T>) -> Result<Vec2<T>> {
    let (r_l, l) = leg_vector(state, mp)?;
    Ok(spring_force_from_leg(r_l, l, xi, mp))
}

#[inline]
fn spring_force_from_leg<T: Real>(r_l: Vec2<T>, l: T, xi: T, mp: &ModelParams<T>) -> Vec2<T> {
    r_l * (mp.k * ((mp.l_0 + xi) / l - T::one()))
}

/// Tangential force on the foot produced by hip torque `tau`.
///
/// Perpendicular to the leg with magnitude `|tau| / l`; its moment about the
/// hip equals `tau`, so positive torque pushes the foot backwards.
pub fn hip_force_on_foot<T: Real>(state: &SystemState<T>, tau: T, mp: &ModelParams<T>) -> Result<Vec2<T>> {
    let (r_l, l) = leg_vector(state, mp)?;
    Ok(tangential_force(r_l, l, tau))
}

#[inline]
fn tangential_force<T: Real>(r_l: Vec2<T>, l: T, tau: T) -> Vec2<T> {
    r_l.perp() * (tau / (l * l))
}

/// Net force the leg applies to the trunk at the hip.
pub fn hip_force_on_trunk<T: Real>(state: &SystemState<T>, u: ControlInput<T>, mp: &ModelParams<T>) -> Result<Vec2<T>> {
    let (r_l, l) = leg_vector(state, mp)?;
    Ok(spring_force_from_leg(r_l, l, u.xi, mp) - tangential_force(r_l, l, u.tau))
}

struct Accelerations<T> {
    trunk: Vec2<T>,
    foot: Vec2<T>,
    theta: T,
}

fn accelerations<T: Real>(state: &SystemState<T>, u: ControlInput<T>, mp: &ModelParams<T>) -> Result<Accelerations<T>> {
    let (r_l, l) = leg_vector(state, mp)?;
    let spring = spring_force_from_leg(r_l, l, u.xi, mp);
    let f_tau = tangential_force(r_l, l, u.tau);
    let on_hip = spring - f_tau;
    let gravity = Vec2::new(T::zero(), -mp.g);
    let r_d = hip_offset(state.theta, mp);
    Ok(Accelerations {
        trunk: on_hip * (T::one() / mp.m_c) + gravity,
        foot: (f_tau - spring) * (T::one() / mp.m_f) + gravity,
        // theta is clockwise-positive, hence the minus on the ccw moment
        theta: (-u.tau - r_d.cross(on_hip)) / mp.j,
    })
}

/// Vector field of the free (flight) system.
pub fn flight_derivative<T: Real>(
    state: &SystemState<T>,
    u: ControlInput<T>,
    mp: &ModelParams<T>,
) -> Result<SystemState<T>> {
    let a = accelerations(state, u, mp)?;
    Ok(SystemState {
        r_c: state.v_c,
        r_f: state.v_f,
        theta: state.omega,
        v_c: a.trunk,
        v_f: a.foot,
        omega: a.theta,
    })
}

/// Vector field with the foot pinned to the ground.
pub fn stance_derivative<T: Real>(
    state: &SystemState<T>,
    u: ControlInput<T>,
    mp: &ModelParams<T>,
) -> Result<SystemState<T>> {
    let a = accelerations(state, u, mp)?;
    Ok(SystemState {
        r_c: state.v_c,
        r_f: Vec2::zero(),
        theta: state.omega,
        v_c: a.trunk,
        v_f: Vec2::zero(),
        omega: a.theta,
    })
}

/// Phase-dispatched vector field.
pub fn derivative<T: Real>(
    state: &SystemState<T>,
    phase: Phase,
    u: ControlInput<T>,
    mp: &ModelParams<T>,
) -> Result<SystemState<T>> {
    match phase {
        Phase::Flight => flight_derivative(state, u, mp),
        Phase::Stance => stance_derivative(state, u, mp),
    }
}

/// Perfectly plastic foot impact: the foot stops and is snapped onto the ground.
pub fn touchdown_impact<T: Real>(state: &SystemState<T>, phase: Phase) -> Result<SystemState<T>> {
    if phase == Phase::Stance {
        return Err(HopperError::ImpactInStance);
    }
    let mut s = *state;
    s.v_f = Vec2::zero();
    s.r_f.y = T::zero();
    Ok(s)
}

/// Conserved-quantity probes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics<T> {
    /// Kinetic + gravitational + elastic energy (J), datum at `y = 0`.
    pub energy: T,
    /// Counter-clockwise angular momentum about the system CoM (kg m^2/s).
    pub angular_momentum: T,
    /// Total linear momentum (kg m/s).
    pub momentum: Vec2<T>,
}

pub fn diagnostics<T: Real>(state: &SystemState<T>, xi: T, mp: &ModelParams<T>) -> Diagnostics<T> {
    let half: T = lit(0.5);
    let kinetic = half * mp.m_c * state.v_c.dot(state.v_c)
        + half * mp.m_f * state.v_f.dot(state.v_f)
        + half * mp.j * state.omega * state.omega;
    let potential = mp.g * (mp.m_c * state.r_c.y + mp.m_f * state.r_f.y);
    let l = (hip_position(state, mp) - state.r_f).norm();
    let stretch = l - mp.l_0 - xi;
    let elastic = half * mp.k * stretch * stretch;

    let m = mp.total_mass();
    let com = (state.r_c * mp.m_c + state.r_f * mp.m_f) * (T::one() / m);
    let momentum = state.v_c * mp.m_c + state.v_f * mp.m_f;
    let v_com = momentum * (T::one() / m);
    let angular_momentum = mp.m_c * (state.r_c - com).cross(state.v_c - v_com)
        + mp.m_f * (state.r_f - com).cross(state.v_f - v_com)
        - mp.j * state.omega;

    Diagnostics {
        energy: kinetic + potential + elastic,
        angular_momentum,
        momentum,
    }
}

/// Mechanical power delivered by the hip motor.
pub fn hip_power<T: Real>(state: &SystemState<T>, tau: T, mp: &ModelParams<T>) -> Result<T> {
    // leg turns clockwise at -axis_rate, trunk at omega; motor acts between them
    let leg_cw_rate = -leg_axis_rate(state, mp)?;
    Ok(tau * (leg_cw_rate - state.omega))
}

/// Elastic energy stored in the leg spring for rest-length offset `xi`.
pub fn elastic_energy<T: Real>(state: &SystemState<T>, xi: T, mp: &ModelParams<T>) -> T {
    let l = (hip_position(state, mp) - state.r_f).norm();
    let s = l - mp.l_0 - xi;
    lit::<T>(0.5) * mp.k * s * s
}
