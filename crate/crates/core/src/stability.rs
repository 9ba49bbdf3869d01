//! Apex-return Poincare map, fixed points, Floquet multipliers and the
//! survival / perturbation experiments built on them.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{update_angle_of_attack, ControlParams, ControllerState};
use crate::error::HopperError;
use crate::hybrid::{step_gait_cycle, FallOutcome, FallReason, SimOptions};
use crate::linalg::{eigenvalues, Matrix};
use crate::model::{ModelParams, Phase, SystemState, Vec2, STATE_DIM};
use crate::num::{lit, Real};

/// Dimension of the apex section.
pub const REDUCED_DIM: usize = 8;

/// Apex state with the trunk shifted to `x_c = 0` and `vy_c = 0` dropped:
/// `[y_c, x_f - x_c, y_f, theta, vx_c, vx_f, vy_f, omega]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedState<T>(pub [T; REDUCED_DIM]);

impl<T: Real> ReducedState<T> {
    pub fn project(s: &SystemState<T>) -> Self {
        Self([
            s.r_c.y,
            s.r_f.x - s.r_c.x,
            s.r_f.y,
            s.theta,
            s.v_c.x,
            s.v_f.x,
            s.v_f.y,
            s.omega,
        ])
    }

    pub fn embed(&self) -> SystemState<T> {
        let x = &self.0;
        SystemState {
            r_c: Vec2::new(T::zero(), x[0]),
            r_f: Vec2::new(x[1], x[2]),
            theta: x[3],
            v_c: Vec2::new(x[4], T::zero()),
            v_f: Vec2::new(x[5], x[6]),
            omega: x[7],
        }
    }

    /// Full 10-vector `[x_c, y_c, x_f, y_f, theta, vx_c, vy_c, vx_f, vy_f, omega]`.
    pub fn to_full(&self) -> [T; STATE_DIM] {
        self.embed().to_array()
    }

    pub fn from_full(a: &[T; STATE_DIM]) -> Self {
        Self::project(&SystemState::from_array(a))
    }

    pub fn apex_height(&self) -> T {
        self.0[0]
    }

    pub fn forward_velocity(&self) -> T {
        self.0[4]
    }

    pub fn with_height_scaled(&self, fraction: T) -> Self {
        let mut x = self.0;
        x[0] *= T::one() + fraction;
        Self(x)
    }

    pub fn distance(&self, other: &Self) -> T {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum StabilityError {
    #[error("no fixed point after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("the apex map fell during the search: {reason}")]
    MapFell { reason: FallReason },
    #[error("linearization probe {sign}e_{coordinate} fell: {reason}")]
    ProbeFell {
        coordinate: usize,
        sign: char,
        reason: FallReason,
    },
    #[error(transparent)]
    Numerical(#[from] HopperError),
}

/// One apex-to-apex return. The swing preceding the first touchdown uses
/// the angle of attack the update law assigns to the apex forward velocity.
pub fn poincare_map<T: Real>(
    x: &ReducedState<T>,
    mp: &ModelParams<T>,
    cp: &ControlParams<T>,
    opts: &SimOptions<T>,
) -> Result<ReducedState<T>, FallOutcome<T>> {
    let state = x.embed();
    let cs = ControllerState::new(update_angle_of_attack(state.v_c.x, cp), Phase::Flight);
    let step = step_gait_cycle(&state, T::zero(), &cs, mp, cp, opts, None)?;
    Ok(ReducedState::project(&step.next_apex))
}

/// Central-difference Jacobian of `f` at `x`; column `j` uses the step
/// `eps * max(1, |x_j|)`. Columns are evaluated in parallel.
pub fn central_difference_jacobian<T, E, F, const N: usize>(f: F, x: &[T; N], eps: T) -> Result<Matrix<T>, (usize, char, E)>
where
    T: Real,
    E: Send,
    F: Fn(&[T; N]) -> Result<[T; N], E> + Sync,
{
    let columns: Vec<Result<Vec<T>, (usize, char, E)>> = (0..N)
        .into_par_iter()
        .map(|j| {
            let h = eps * T::one().max(x[j].abs());
            let mut xp = *x;
            let mut xm = *x;
            xp[j] += h;
            xm[j] -= h;
            let fp = f(&xp).map_err(|e| (j, '+', e))?;
            let fm = f(&xm).map_err(|e| (j, '-', e))?;
            // the realised step, not h, so rounding in x_j +- h cancels
            let two_h = xp[j] - xm[j];
            Ok((0..N).map(|i| (fp[i] - fm[i]) / two_h).collect())
        })
        .collect();
    let cols = columns.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(Matrix::from_columns(&cols))
}

/// Default relative probe size for [`linearize`].
pub const DEFAULT_EPS: f64 = 1e-6;

/// Linearized apex map at `x_star`.
pub fn linearize<T: Real>(
    x_star: &ReducedState<T>,
    eps: T,
    mp: &ModelParams<T>,
    cp: &ControlParams<T>,
    opts: &SimOptions<T>,
) -> Result<Matrix<T>, StabilityError> {
    central_difference_jacobian(
        |x: &[T; REDUCED_DIM]| poincare_map(&ReducedState(*x), mp, cp, opts).map(|r| r.0),
        &x_star.0,
        eps,
    )
    .map_err(|(coordinate, sign, fall)| StabilityError::ProbeFell {
        coordinate,
        sign,
        reason: fall.reason,
    })
}

/// Eigenvalues sorted by descending magnitude, and the spectral radius.
pub fn floquet_multipliers<T: Real>(jacobian: &Matrix<T>) -> crate::Result<(Vec<Complex<T>>, T)> {
    let mut ev = eigenvalues(jacobian)?;
    ev.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.re.partial_cmp(&a.re).unwrap_or(std::cmp::Ordering::Equal))
            .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    let rho = ev.first().map_or(T::zero(), |z| z.norm());
    Ok((ev, rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions<T> {
    pub max_iter: usize,
    /// Target on the infinity norm of `P(x) - x`.
    pub tol: T,
    pub eps: T,
}

impl<T: Real> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: lit(1e-8),
            eps: lit(DEFAULT_EPS),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint<T> {
    pub state: ReducedState<T>,
    pub residual: T,
    pub iterations: usize,
}

fn residual_of<T: Real>(
    x: &ReducedState<T>,
    mp: &ModelParams<T>,
    cp: &ControlParams<T>,
    opts: &SimOptions<T>,
) -> Result<(ReducedState<T>, T), FallOutcome<T>> {
    let px = poincare_map(x, mp, cp, opts)?;
    let r = px.distance(x);
    Ok((px, if r.is_finite() { r } else { T::infinity() }))
}

/// Damped Newton on `P(x) - x`. A step is halved until the residual
/// drops; when no damped step survives and improves, one plain map
/// iteration is taken instead.
pub fn find_fixed_point<T: Real>(
    guess: &ReducedState<T>,
    mp: &ModelParams<T>,
    cp: &ControlParams<T>,
    opts: &SimOptions<T>,
    newton: &NewtonOptions<T>,
) -> Result<FixedPoint<T>, StabilityError> {
    let mut x = *guess;
    let (mut px, mut res) = residual_of(&x, mp, cp, opts).map_err(|f| StabilityError::MapFell { reason: f.reason })?;
    for it in 0..newton.max_iter {
        if res < newton.tol {
            return Ok(FixedPoint { state: x, residual: res, iterations: it });
        }
        let mut accepted = false;
        if let Ok(jac) = linearize(&x, newton.eps, mp, cp, opts) {
            let mut a = jac;
            for i in 0..REDUCED_DIM {
                a[(i, i)] -= T::one();
            }
            let rhs: Vec<T> = (0..REDUCED_DIM).map(|i| x.0[i] - px.0[i]).collect();
            if let Some(delta) = a.solve(&rhs).filter(|d| d.iter().all(|v| v.is_finite())) {
                let mut alpha = T::one();
                for _ in 0..12 {
                    let mut trial = x;
                    for i in 0..REDUCED_DIM {
                        trial.0[i] += alpha * delta[i];
                    }
                    if let Ok((ptrial, rtrial)) = residual_of(&trial, mp, cp, opts) {
                        if rtrial < res {
                            x = trial;
                            px = ptrial;
                            res = rtrial;
                            accepted = true;
                            break;
                        }
                    }
                    alpha *= lit(0.5);
                }
            }
        }
        if !accepted {
            log::debug!("newton step rejected at iteration {it}, falling back to map iteration");
            x = px;
            let (p, r) = residual_of(&x, mp, cp, opts).map_err(|f| StabilityError::MapFell { reason: f.reason })?;
            px = p;
            res = r;
        }
    }
    if res < newton.tol {
        return Ok(FixedPoint {
            state: x,
            residual: res,
            iterations: newton.max_iter,
        });
    }
    Err(StabilityError::NoConvergence {
        iterations: newton.max_iter,
        residual: res.to_f64_lossy(),
    })
}

/// Number of apex returns completed before a fall, capped at `max_steps`.
pub fn steps_to_fall<T: Real>(
    initial: &ReducedState<T>,
    max_steps: usize,
    mp: &ModelParams<T>,
    cp: &ControlParams<T>,
    opts: &SimOptions<T>,
) -> usize {
    let mut x = *initial;
    for n in 0..max_steps {
        match poincare_map(&x, mp, cp, opts) {
            Ok(next) => x = next,
            Err(_) => return n,
        }
    }
    max_steps
}

/// Inclusive arithmetic range `lo, lo + step, ..., hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis<T> {
    pub lo: T,
    pub hi: T,
    pub step: T,
}

impl<T: Real> GridAxis<T> {
    pub fn new(lo: T, hi: T, step: T) -> Self {
        Self { lo, hi, step }
    }

    pub fn single(v: T) -> Self {
        Self { lo: v, hi: v, step: T::one() }
    }

    /// Grid values, computed as `lo + i * step` to avoid accumulated drift.
    pub fn values(&self) -> Vec<T> {
        if self.step <= T::zero() || self.hi < self.lo {
            return vec![self.lo];
        }
        let n = ((self.hi - self.lo) / self.step + lit(1e-9)).floor().to_usize().unwrap_or(0);
        (0..=n).map(|i| self.lo + T::from_usize(i).unwrap() * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell<T> {
    pub vx_des: T,
    pub l0_swing: T,
    pub steps_survived: usize,
}

impl<T: Real> SweepCell<T> {
    pub fn survived(&self, max_steps: usize) -> bool {
        self.steps_survived >= max_steps
    }
}

/// Steps-to-fall over a `(vx_des, l0_swing)` grid from a common initial
/// apex state. Cells are ordered `vx_des`-major.
pub fn sweep<T: Real>(
    vx: &GridAxis<T>,
    l0: &GridAxis<T>,
    initial: &ReducedState<T>,
    max_steps: usize,
    mp: &ModelParams<T>,
    template: &ControlParams<T>,
    opts: &SimOptions<T>,
) -> Vec<SweepCell<T>> {
    let cells: Vec<(T, T)> = vx
        .values()
        .into_iter()
        .flat_map(|v| l0.values().into_iter().map(move |l| (v, l)))
        .collect();
    cells
        .into_par_iter()
        .map(|(vx_des, l0_swing)| {
            let cp = ControlParams { vx_des, l0_swing, ..*template };
            SweepCell {
                vx_des,
                l0_swing,
                steps_survived: steps_to_fall(initial, max_steps, mp, &cp, opts),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Converged,
    Diverged,
    Fell,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Converged => "converged",
            Self::Diverged => "diverged",
            Self::Fell => "fell",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord<T> {
    pub fraction: T,
    /// Infinity-norm distance to the fixed point; entry 0 is the perturbed start.
    pub distances: Vec<T>,
    pub states: Vec<ReducedState<T>>,
    pub verdict: Verdict,
    pub fall: Option<FallReason>,
}

/// Absolute distance below which a perturbed run counts as converged.
pub const CONVERGED_ABS: f64 = 1e-3;
/// Fraction of the initial distance below which a run counts as converged.
pub const CONVERGED_REL: f64 = 1e-2;

/// Scales the apex height of `x_star` by `1 + fraction` and tracks the
/// distance to `x_star` over `n_cycles` apex returns.
pub fn perturb_and_track<T: Real>(
    x_star: &ReducedState<T>,
    fraction: T,
    n_cycles: usize,
    mp: &ModelParams<T>,
    cp: &ControlParams<T>,
    opts: &SimOptions<T>,
) -> ConvergenceRecord<T> {
    let mut x = x_star.with_height_scaled(fraction);
    let d0 = x.distance(x_star);
    let mut distances = vec![d0];
    let mut states = vec![x];
    let mut fall = None;
    for _ in 0..n_cycles {
        match poincare_map(&x, mp, cp, opts) {
            Ok(next) => {
                x = next;
                distances.push(x.distance(x_star));
                states.push(x);
            }
            Err(f) => {
                fall = Some(f.reason);
                break;
            }
        }
    }
    let last = *distances.last().unwrap();
    let verdict = if fall.is_some() {
        Verdict::Fell
    } else if last < lit(CONVERGED_ABS) || last < lit::<T>(CONVERGED_REL) * d0 {
        Verdict::Converged
    } else {
        Verdict::Diverged
    };
    ConvergenceRecord {
        fraction,
        distances,
        states,
        verdict,
        fall,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityMap<T> {
    pub initial: T,
    /// Successive apex forward velocities, starting with the initial one.
    pub velocities: Vec<T>,
    pub fall: Option<FallReason>,
}

impl<T: Real> VelocityMap<T> {
    /// `(v_k, v_{k+1})` pairs.
    pub fn pairs(&self) -> Vec<(T, T)> {
        self.velocities.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Last velocity if the final two returns agree to `tol`.
    pub fn converged_to(&self, tol: T) -> Option<T> {
        match self.velocities.as_slice() {
            [.., a, b] if self.fall.is_none() && (*a - *b).abs() < tol => Some(*b),
            _ => None,
        }
    }
}

/// Apex forward-velocity sequence over `n_cycles` returns from `initial`.
/// With `adapt_phi = false` the angle of attack stays at `phi_0`.
pub fn velocity_return_map<T: Real>(
    initial: &ReducedState<T>,
    n_cycles: usize,
    adapt_phi: bool,
    mp: &ModelParams<T>,
    cp: &ControlParams<T>,
    opts: &SimOptions<T>,
) -> VelocityMap<T> {
    let cp = if adapt_phi {
        *cp
    } else {
        ControlParams { k_gain: T::zero(), ..*cp }
    };
    let mut x = *initial;
    let mut velocities = vec![x.forward_velocity()];
    let mut fall = None;
    for _ in 0..n_cycles {
        match poincare_map(&x, mp, &cp, opts) {
            Ok(next) => {
                x = next;
                velocities.push(x.forward_velocity());
            }
            Err(f) => {
                fall = Some(f.reason);
                break;
            }
        }
    }
    VelocityMap {
        initial: initial.forward_velocity(),
        velocities,
        fall,
    }
}

/// Fixed point, linearization and spectrum of the apex map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport<T> {
    pub fixed_point: ReducedState<T>,
    pub fixed_point_full: [T; STATE_DIM],
    pub residual: T,
    pub newton_iterations: usize,
    pub jacobian: Matrix<T>,
    pub multipliers: Vec<(T, T)>,
    pub spectral_radius: T,
    pub determinant: T,
    pub stable: bool,
}

/// Fixed point from `guess`, then its Jacobian and Floquet multipliers.
pub fn analyze<T: Real>(
    guess: &ReducedState<T>,
    mp: &ModelParams<T>,
    cp: &ControlParams<T>,
    opts: &SimOptions<T>,
    newton: &NewtonOptions<T>,
) -> Result<StabilityReport<T>, StabilityError> {
    let fp = find_fixed_point(guess, mp, cp, opts, newton)?;
    let jac = linearize(&fp.state, newton.eps, mp, cp, opts)?;
    let (ev, rho) = floquet_multipliers(&jac)?;
    Ok(StabilityReport {
        fixed_point: fp.state,
        fixed_point_full: fp.state.to_full(),
        residual: fp.residual,
        newton_iterations: fp.iterations,
        determinant: jac.determinant(),
        jacobian: jac,
        multipliers: ev.iter().map(|z| (z.re, z.im)).collect(),
        spectral_radius: rho,
        stable: rho < T::one(),
    })
}

/// Apex state of the period-one gait at the reference gains,
/// `(vx_des, l0_swing) = (5.0, 0.087)` with relative retraction.
pub const NOMINAL_APEX: [f64; REDUCED_DIM] = [
    1.2325992478678163,
    0.3192790554552886,
    0.20122523572556977,
    0.36667170183094794,
    5.108739199212771,
    6.002660479164806,
    -3.961335472514103,
    -0.3689051895352008,
];

pub fn nominal_apex<T: Real>() -> ReducedState<T> {
    ReducedState(NOMINAL_APEX.map(lit))
}
