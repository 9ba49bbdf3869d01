#![allow(dead_code)]

use ulthop::model::{derivative, hip_position, ControlInput, ModelParams, Phase, SystemState, Vec2, STATE_DIM};
use ulthop::ode::{Stepper, Tolerances};

pub type S = SystemState<f64>;

/// Airborne state well above the ground with the leg swung back and the
/// trunk spinning, so every coupling term is active.
pub fn airborne(mp: &ModelParams<f64>, leg_len: f64) -> S {
    let mut s = S {
        r_c: Vec2::new(0.3, 3.0),
        theta: 0.2,
        v_c: Vec2::new(4.0, 1.5),
        omega: 1.3,
        ..Default::default()
    };
    let phi = 110f64.to_radians();
    s.r_f = hip_position(&s, mp) + Vec2::new(phi.cos(), -phi.sin()) * leg_len;
    s.v_f = Vec2::new(2.5, 0.4);
    s
}

/// Integrates the open-loop or closed-loop vector field from `t = 0` to
/// `t_end`, returning the state at every accepted step.
pub fn integrate<U>(s0: &S, phase: Phase, control: U, t_end: f64, mp: &ModelParams<f64>) -> Vec<(f64, S)>
where
    U: Fn(&S) -> ControlInput<f64>,
{
    let rhs = |y: &[f64; STATE_DIM]| {
        let s = S::from_array(y);
        derivative(&s, phase, control(&s), mp).map(|d| d.to_array())
    };
    let tol = Tolerances { abs: 1e-12, rel: 1e-12 };
    let mut st = Stepper::new(rhs, 0.0, s0.to_array(), tol, 1e-3).unwrap();
    let mut out = vec![(0.0, *s0)];
    while st.t < t_end {
        st.step(t_end).unwrap();
        out.push((st.t, S::from_array(&st.y)));
    }
    out
}

pub fn rng(seed: u64) -> rand::rngs::StdRng {
    rand::SeedableRng::seed_from_u64(seed)
}
