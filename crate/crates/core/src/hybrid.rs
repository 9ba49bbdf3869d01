//! Hybrid execution of the flight/stance automaton.
//!
//! A gait cycle runs apex -> touchdown -> lift-off -> apex. Each phase is
//! integrated with [`crate::ode::Stepper`]; guard crossings are bracketed
//! per accepted step and polished with Brent's method on the exact
//! (re-stepped) solution, so event states are genuine integrator states
//! rather than interpolants.

use serde::{Deserialize, Serialize};

use crate::control::{control_action, update_angle_of_attack, ControlParams, ControllerState};
use crate::error::{HopperError, Result};
use crate::model::{
    derivative, elastic_energy, hip_position, touchdown_impact, ControlInput, ModelParams, Phase,
    SystemState, STATE_DIM,
};
use crate::num::{lit, Real};
use crate::ode::{brent, Stepper, Tolerances};

/// Discrete transition or terminal condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Touchdown,
    LiftOff,
    Apex,
    Fall,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Touchdown => "touchdown",
            Self::LiftOff => "liftoff",
            Self::Apex => "apex",
            Self::Fall => "fall",
        }
    }

    /// `true` if the guard fires on a descending zero crossing.
    fn descending(self) -> bool {
        !matches!(self, Self::LiftOff)
    }
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitEvent<T> {
    pub kind: EventKind,
    pub time: T,
    /// State at the guard zero, before any reset map.
    pub state: SystemState<T>,
}

/// Envelope outside of which the hopper counts as fallen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallCriteria<T> {
    pub min_trunk_height: T,
    pub max_stance_duration: T,
    pub max_flight_duration: T,
}

impl<T: Real> Default for FallCriteria<T> {
    fn default() -> Self {
        Self {
            min_trunk_height: lit(0.4),
            max_stance_duration: lit(2.0),
            max_flight_duration: lit(3.0),
        }
    }
}

/// Integrator and hybrid-execution settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions<T> {
    pub tol: Tolerances<T>,
    pub fall: FallCriteria<T>,
    /// Largest step the integrator may take (s).
    pub h_max: T,
    /// Dense-output sampling period (s).
    pub sample_dt: T,
    /// Root-polishing target on the guard value.
    pub event_tol: T,
}

impl<T: Real> Default for SimOptions<T> {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            fall: FallCriteria::default(),
            h_max: lit(0.01),
            sample_dt: lit(1e-3),
            event_tol: lit(1e-13),
        }
    }
}

/// Scalar guard function; the event fires where it crosses zero in the
/// guard's direction.
pub fn guard_value<T: Real>(kind: EventKind, s: &SystemState<T>, mp: &ModelParams<T>, fall: &FallCriteria<T>) -> T {
    match kind {
        EventKind::Touchdown => s.r_f.y,
        EventKind::LiftOff => (hip_position(s, mp) - s.r_f).norm() - mp.l_0,
        EventKind::Apex => s.v_c.y,
        EventKind::Fall => (s.r_c.y - fall.min_trunk_height).min(s.theta.cos()),
    }
}

// positive while the guard has not fired
fn signed_guard<T: Real>(kind: EventKind, s: &SystemState<T>, mp: &ModelParams<T>, fall: &FallCriteria<T>) -> T {
    let g = guard_value(kind, s, mp, fall);
    if kind.descending() {
        g
    } else {
        -g
    }
}

/// One dense-output sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample<T> {
    pub t: T,
    pub state: SystemState<T>,
    pub u: ControlInput<T>,
    pub phase: Phase,
}

/// Time series on a fixed grid plus exact event states.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub samples: Vec<Sample<T>>,
    pub events: Vec<GaitEvent<T>>,
}

/// Collects samples on the grid `k * dt` across phase boundaries.
#[derive(Debug, Clone)]
pub struct Recorder<T> {
    pub trajectory: Trajectory<T>,
    dt: T,
    next_index: u64,
    dense: bool,
}

impl<T: Real> Recorder<T> {
    /// `dense = false` keeps only the event list.
    pub fn new(dt: T, t0: T, dense: bool) -> Self {
        let next_index = (t0 / dt).ceil().to_u64().unwrap_or(0);
        Self {
            trajectory: Trajectory::default(),
            dt,
            next_index,
            dense,
        }
    }

    fn next_t(&self) -> T {
        lit::<T>(self.next_index as f64) * self.dt
    }

    fn push_event(&mut self, e: GaitEvent<T>) {
        self.trajectory.events.push(e);
    }
}

/// Outcome of a phase integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEnd<T> {
    pub event: GaitEvent<T>,
    pub steps: usize,
}

/// Integrates one phase of the hybrid system under the switching controller
/// until the first of `guards` fires.
///
/// Fails with [`HopperError::MaxTimeExceeded`] if no guard fires within
/// `max_duration` seconds.
#[allow(clippy::too_many_arguments)]
pub fn integrate_until_event<T: Real>(
    state: &SystemState<T>,
    t0: T,
    phase: Phase,
    controller: &ControllerState<T>,
    mp: &ModelParams<T>,
    cp: &ControlParams<T>,
    guards: &[EventKind],
    opts: &SimOptions<T>,
    max_duration: T,
    mut recorder: Option<&mut Recorder<T>>,
) -> Result<PhaseEnd<T>> {
    if guards.is_empty() {
        return Err(HopperError::NoGuards);
    }
    let cs = ControllerState::new(controller.phi_des, phase);
    let fall = opts.fall;
    let rhs = move |y: &[T; STATE_DIM]| -> Result<[T; STATE_DIM]> {
        let s = SystemState::from_array(y);
        let u = control_action(&s, &cs, mp, cp)?;
        Ok(derivative(&s, phase, u, mp)?.to_array())
    };

    // already past a guard at the start
    for &kind in guards {
        if signed_guard(kind, state, mp, &fall) < T::zero() {
            return Ok(PhaseEnd {
                event: GaitEvent { kind, time: t0, state: *state },
                steps: 0,
            });
        }
    }

    let mut stepper = Stepper::new(rhs, t0, state.to_array(), opts.tol, opts.h_max)?;
    let t_end = t0 + max_duration;
    let mut steps = 0usize;
    loop {
        if stepper.t >= t_end {
            return Err(HopperError::MaxTimeExceeded {
                t_max: max_duration.to_f64_lossy(),
            });
        }
        let acc = stepper.step(t_end)?;
        steps += 1;
        let y1 = SystemState::from_array(&stepper.y);
        let y0 = SystemState::from_array(&acc.y0);
        let h_full = stepper.t - acc.t0;

        let mut best: Option<(T, EventKind, [T; STATE_DIM])> = None;
        for &kind in guards {
            let sa = signed_guard(kind, &y0, mp, &fall);
            let sb = signed_guard(kind, &y1, mp, &fall);
            let crossed = (sa >= T::zero() && sb < T::zero()) || (sa > T::zero() && sb <= T::zero());
            if !crossed {
                continue;
            }
            let mut last = (h_full, stepper.y);
            let (h_root, _) = brent(
                |h: T| {
                    let y = stepper.exact_from(&acc.y0, &acc.k1, h)?;
                    last = (h, y);
                    Ok(signed_guard(kind, &SystemState::from_array(&y), mp, &fall))
                },
                T::zero(),
                h_full,
                sa,
                sb,
                opts.event_tol,
                lit(1e-15),
                200,
            )?;
            let y_root = if last.0 == h_root {
                last.1
            } else {
                stepper.exact_from(&acc.y0, &acc.k1, h_root)?
            };
            if best.map_or(true, |(h, _, _)| h_root < h) {
                best = Some((h_root, kind, y_root));
            }
        }

        let t_limit = match best {
            Some((h, _, _)) => acc.t0 + h,
            None => stepper.t,
        };
        if let Some(rec) = recorder.as_deref_mut() {
            if rec.dense {
                while rec.next_t() <= t_limit {
                    let t = rec.next_t();
                    let s = SystemState::from_array(&acc.dense.eval(t));
                    let u = control_action(&s, &cs, mp, cp)?;
                    rec.trajectory.samples.push(Sample { t, state: s, u, phase });
                    rec.next_index += 1;
                }
            }
        }
        if let Some((h, kind, y)) = best {
            let event = GaitEvent {
                kind,
                time: acc.t0 + h,
                state: SystemState::from_array(&y),
            };
            return Ok(PhaseEnd { event, steps });
        }
    }
}

/// Why a run was declared fallen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FallReason {
    /// Trunk CoM dropped below the minimum height.
    TrunkTooLow,
    /// Trunk inclination beyond +-90 deg.
    TrunkTipped,
    StanceTimeout,
    FlightTimeout,
    /// The trunk reached its apex before lift-off, or the foot touched
    /// down before the trunk apex.
    NoFlightApex,
    /// The foot was driven into the ground right at lift-off.
    FootStuck,
    /// The foot hit the ground with the leg already longer than `l_0`.
    OverextendedTouchdown,
    /// Integrator or controller failure (singular leg, step underflow, ...).
    Numerical(String),
}

impl std::fmt::Display for FallReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::TrunkTooLow => f.write_str("trunk too low"),
            Self::TrunkTipped => f.write_str("trunk tipped over"),
            Self::StanceTimeout => f.write_str("stance timeout"),
            Self::FlightTimeout => f.write_str("flight timeout"),
            Self::NoFlightApex => f.write_str("no apex during flight"),
            Self::FootStuck => f.write_str("foot could not leave the ground"),
            Self::OverextendedTouchdown => f.write_str("touchdown with the leg beyond rest length"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallOutcome<T> {
    pub reason: FallReason,
    pub time: T,
    pub state: SystemState<T>,
    pub phase: Phase,
}

impl<T: Real> std::fmt::Display for FallOutcome<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} at t = {:.4} s during {}", self.reason, self.time, self.phase)
    }
}

/// Per-cycle summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord<T> {
    /// Apex state reached at the end of the cycle.
    pub apex_state: SystemState<T>,
    /// State at touchdown, before the impact.
    pub touchdown_state: SystemState<T>,
    pub liftoff_state: SystemState<T>,
    /// Desired angle of attack during the swing that ended at touchdown.
    pub phi_d_used: T,
    /// Desired angle of attack set at touchdown for the next swing.
    pub phi_d_next: T,
    pub t_touchdown: T,
    pub t_liftoff: T,
    pub t_apex: T,
    pub stance_duration: T,
    /// Apex-to-touchdown plus lift-off-to-apex.
    pub flight_duration: T,
    /// Elastic energy added by the rest-length switches at touchdown and lift-off (J).
    pub energy_injected: T,
    /// Kinetic energy dissipated by the foot impact (J).
    pub impact_loss: T,
}

/// Successful cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleStep<T> {
    pub next_apex: SystemState<T>,
    pub record: CycleRecord<T>,
    pub controller: ControllerState<T>,
}

fn fall_from_error<T: Real>(err: HopperError, time: T, state: SystemState<T>, phase: Phase) -> FallOutcome<T> {
    let reason = match err {
        HopperError::MaxTimeExceeded { .. } => match phase {
            Phase::Stance => FallReason::StanceTimeout,
            Phase::Flight => FallReason::FlightTimeout,
        },
        e => FallReason::Numerical(e.to_string()),
    };
    FallOutcome { reason, time, state, phase }
}

fn fall_from_guard<T: Real>(ev: &GaitEvent<T>, fall: &FallCriteria<T>, phase: Phase) -> FallOutcome<T> {
    let reason = if ev.state.r_c.y - fall.min_trunk_height <= ev.state.theta.cos() {
        FallReason::TrunkTooLow
    } else {
        FallReason::TrunkTipped
    };
    FallOutcome {
        reason,
        time: ev.time,
        state: ev.state,
        phase,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_phase<T: Real>(
    state: &SystemState<T>,
    t0: T,
    phase: Phase,
    cs: &ControllerState<T>,
    mp: &ModelParams<T>,
    cp: &ControlParams<T>,
    guards: &[EventKind],
    opts: &SimOptions<T>,
    recorder: Option<&mut Recorder<T>>,
) -> std::result::Result<GaitEvent<T>, FallOutcome<T>> {
    let max_duration = match phase {
        Phase::Stance => opts.fall.max_stance_duration,
        Phase::Flight => opts.fall.max_flight_duration,
    };
    let end = integrate_until_event(state, t0, phase, cs, mp, cp, guards, opts, max_duration, recorder)
        .map_err(|e| fall_from_error(e, t0, *state, phase))?;
    if end.event.kind == EventKind::Fall {
        return Err(fall_from_guard(&end.event, &opts.fall, phase));
    }
    Ok(end.event)
}

/// Runs one gait cycle starting from a flight state (normally an apex).
///
/// Sequence: flight until touchdown (impact, angle-of-attack update,
/// `xi -> 0`), stance until the leg reaches `l_0` (`xi -> swing value`),
/// flight until the trunk apex.
pub fn step_gait_cycle<T: Real>(
    apex_state: &SystemState<T>,
    t0: T,
    controller: &ControllerState<T>,
    mp: &ModelParams<T>,
    cp: &ControlParams<T>,
    opts: &SimOptions<T>,
    mut recorder: Option<&mut Recorder<T>>,
) -> std::result::Result<CycleStep<T>, FallOutcome<T>> {
    let fall_guard = signed_guard(EventKind::Fall, apex_state, mp, &opts.fall);
    if fall_guard < T::zero() {
        let ev = GaitEvent { kind: EventKind::Fall, time: t0, state: *apex_state };
        if let Some(r) = recorder.as_deref_mut() {
            r.push_event(ev);
        }
        return Err(fall_from_guard(&ev, &opts.fall, Phase::Flight));
    }
    let swing_xi = cp.swing_xi(mp);
    let mut cs = ControllerState::new(controller.phi_des, Phase::Flight);
    let record_event = |r: &mut Option<&mut Recorder<T>>, ev: GaitEvent<T>| {
        if let Some(r) = r.as_deref_mut() {
            r.push_event(ev);
        }
    };
    let record_fall = |r: &mut Option<&mut Recorder<T>>, f: &FallOutcome<T>| {
        if let Some(r) = r.as_deref_mut() {
            r.push_event(GaitEvent { kind: EventKind::Fall, time: f.time, state: f.state });
        }
    };

    // descent to touchdown
    let td = match run_phase(
        apex_state,
        t0,
        Phase::Flight,
        &cs,
        mp,
        cp,
        &[EventKind::Touchdown, EventKind::Fall],
        opts,
        recorder.as_deref_mut(),
    ) {
        Ok(ev) => ev,
        Err(f) => {
            record_fall(&mut recorder, &f);
            return Err(f);
        }
    };
    record_event(&mut recorder, td);
    let phi_d_used = cs.phi_des;
    let after_impact = touchdown_impact(&td.state, Phase::Flight).expect("impact applied in flight");
    let ke = |s: &SystemState<T>| lit::<T>(0.5) * mp.m_f * s.v_f.dot(s.v_f);
    let impact_loss = ke(&td.state) - ke(&after_impact);
    let mut energy_injected = elastic_energy(&after_impact, T::zero(), mp) - elastic_energy(&after_impact, swing_xi, mp);
    let phi_d_next = update_angle_of_attack(td.state.v_c.x, cp);
    cs = ControllerState::new(phi_d_next, Phase::Stance);
    if guard_value(EventKind::LiftOff, &after_impact, mp, &opts.fall) >= T::zero() {
        let f = FallOutcome {
            reason: FallReason::OverextendedTouchdown,
            time: td.time,
            state: after_impact,
            phase: Phase::Stance,
        };
        record_fall(&mut recorder, &f);
        return Err(f);
    }

    // stance to lift-off
    let lo = match run_phase(
        &after_impact,
        td.time,
        Phase::Stance,
        &cs,
        mp,
        cp,
        &[EventKind::LiftOff, EventKind::Fall],
        opts,
        recorder.as_deref_mut(),
    ) {
        Ok(ev) => ev,
        Err(f) => {
            record_fall(&mut recorder, &f);
            return Err(f);
        }
    };
    record_event(&mut recorder, lo);
    energy_injected += elastic_energy(&lo.state, swing_xi, mp) - elastic_energy(&lo.state, T::zero(), mp);
    cs.phase = Phase::Flight;

    // ascent to apex
    let ap = match run_phase(
        &lo.state,
        lo.time,
        Phase::Flight,
        &cs,
        mp,
        cp,
        &[EventKind::Apex, EventKind::Touchdown, EventKind::Fall],
        opts,
        recorder.as_deref_mut(),
    ) {
        Ok(ev) => ev,
        Err(f) => {
            record_fall(&mut recorder, &f);
            return Err(f);
        }
    };
    if ap.kind != EventKind::Apex || ap.time == lo.time {
        let reason = if ap.kind == EventKind::Touchdown && ap.time == lo.time {
            FallReason::FootStuck
        } else {
            FallReason::NoFlightApex
        };
        let f = FallOutcome {
            reason,
            time: ap.time,
            state: ap.state,
            phase: Phase::Flight,
        };
        record_fall(&mut recorder, &f);
        return Err(f);
    }
    record_event(&mut recorder, ap);

    let record = CycleRecord {
        apex_state: ap.state,
        touchdown_state: td.state,
        liftoff_state: lo.state,
        phi_d_used,
        phi_d_next,
        t_touchdown: td.time,
        t_liftoff: lo.time,
        t_apex: ap.time,
        stance_duration: lo.time - td.time,
        flight_duration: (td.time - t0) + (ap.time - lo.time),
        energy_injected,
        impact_loss,
    };
    Ok(CycleStep {
        next_apex: ap.state,
        record,
        controller: cs,
    })
}

/// How a multi-cycle run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome<T> {
    Completed,
    /// `cycle` is the zero-based index of the cycle that failed.
    Fell { cycle: usize, fall: FallOutcome<T> },
}

impl<T> Outcome<T> {
    pub fn is_completed(&self) -> bool {
        matches!(self, Outcome::Completed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult<T> {
    pub trajectory: Trajectory<T>,
    pub cycles: Vec<CycleRecord<T>>,
    pub outcome: Outcome<T>,
    /// Apex state the first cycle started from.
    pub initial_apex: SystemState<T>,
}

/// Integrates a flight state forward to its next trunk apex. States already
/// at apex (`|vy_c| <= 1e-8`) are returned unchanged.
pub fn advance_to_apex<T: Real>(
    state: &SystemState<T>,
    t0: T,
    controller: &ControllerState<T>,
    mp: &ModelParams<T>,
    cp: &ControlParams<T>,
    opts: &SimOptions<T>,
    recorder: Option<&mut Recorder<T>>,
) -> std::result::Result<(SystemState<T>, T), FallOutcome<T>> {
    if state.v_c.y.abs() <= lit(1e-8) {
        return Ok((*state, t0));
    }
    if state.v_c.y < T::zero() {
        // descending: the next apex comes after a full stance
        let step = step_gait_cycle(state, t0, controller, mp, cp, opts, recorder)?;
        return Ok((step.next_apex, step.record.t_apex));
    }
    let ev = run_phase(
        state,
        t0,
        Phase::Flight,
        controller,
        mp,
        cp,
        &[EventKind::Apex, EventKind::Touchdown, EventKind::Fall],
        opts,
        recorder,
    )?;
    if ev.kind != EventKind::Apex {
        return Err(FallOutcome {
            reason: FallReason::NoFlightApex,
            time: ev.time,
            state: ev.state,
            phase: Phase::Flight,
        });
    }
    Ok((ev.state, ev.time))
}

/// Chains `n_cycles` gait cycles from `initial` (a flight state).
///
/// The first swing uses the angle of attack the update law assigns to the
/// initial forward velocity.
pub fn simulate<T: Real>(
    initial: &SystemState<T>,
    n_cycles: usize,
    mp: &ModelParams<T>,
    cp: &ControlParams<T>,
    opts: &SimOptions<T>,
    record_dense: bool,
) -> SimulationResult<T> {
    let mut rec = Recorder::new(opts.sample_dt, T::zero(), record_dense);
    let mut cs = ControllerState::new(update_angle_of_attack(initial.v_c.x, cp), Phase::Flight);
    let mut cycles = Vec::with_capacity(n_cycles);

    let (mut apex, mut t) = match advance_to_apex(initial, T::zero(), &cs, mp, cp, opts, Some(&mut rec)) {
        Ok(v) => v,
        Err(fall) => {
            return SimulationResult {
                trajectory: rec.trajectory,
                cycles,
                outcome: Outcome::Fell { cycle: 0, fall },
                initial_apex: *initial,
            };
        }
    };
    if apex != *initial {
        cs.phi_des = update_angle_of_attack(apex.v_c.x, cp);
    }
    let initial_apex = apex;
    for cycle in 0..n_cycles {
        match step_gait_cycle(&apex, t, &cs, mp, cp, opts, Some(&mut rec)) {
            Ok(step) => {
                apex = step.next_apex;
                t = step.record.t_apex;
                cs = step.controller;
                cycles.push(step.record);
            }
            Err(fall) => {
                return SimulationResult {
                    trajectory: rec.trajectory,
                    cycles,
                    outcome: Outcome::Fell { cycle, fall },
                    initial_apex,
                };
            }
        }
    }
    SimulationResult {
        trajectory: rec.trajectory,
        cycles,
        outcome: Outcome::Completed,
        initial_apex,
    }
}
