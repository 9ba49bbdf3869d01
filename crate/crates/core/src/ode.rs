//! Dormand–Prince 5(4) integrator with PI step-size control, continuous
//! extension, and a bracketing root finder for event location.

use crate::error::{HopperError, Result};
use crate::num::{lit, Real};

/// Integration tolerances.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances<T> {
    pub abs: T,
    pub rel: T,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Self {
            abs: lit(1e-10),
            rel: lit(1e-9),
        }
    }
}

impl<T: Real> Tolerances<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs > T::zero() && self.rel > T::zero()) {
            return Err(HopperError::InvalidParameter(format!(
                "tolerances must be positive, got abs = {}, rel = {}",
                self.abs, self.rel
            )));
        }
        Ok(())
    }
}

// Butcher tableau
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[inline]
fn axpy<T: Real, const N: usize>(y: &[T; N], h: T, terms: &[(f64, &[T; N])]) -> [T; N] {
    let mut out = *y;
    for (c, k) in terms {
        let hc = h * lit::<T>(*c);
        for i in 0..N {
            out[i] += hc * k[i];
        }
    }
    out
}

/// One full Dormand–Prince step: the new state, all seven stages and the
/// embedded error estimate.
pub struct RkStep<T, const N: usize> {
    pub y: [T; N],
    pub k: [[T; N]; 7],
    pub err: [T; N],
}

/// Takes a single step of size `h` from `y` with first stage `k1 = f(y)`.
pub fn dopri_step<T, F, const N: usize>(f: &F, y: &[T; N], k1: &[T; N], h: T) -> Result<RkStep<T, N>>
where
    T: Real,
    F: Fn(&[T; N]) -> Result<[T; N]>,
{
    let k2 = f(&axpy(y, h, &[(A21, k1)]))?;
    let k3 = f(&axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = f(&axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = f(&axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
    let k6 = f(&axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
    let y_new = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(&y_new)?;
    let zero = [T::zero(); N];
    let err = axpy(&zero, h, &[(E1, k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)]);
    Ok(RkStep {
        y: y_new,
        k: [*k1, k2, k3, k4, k5, k6, k7],
        err,
    })
}

/// Continuous extension over an accepted step.
#[derive(Debug, Clone)]
pub struct DenseStep<T, const N: usize> {
    pub t0: T,
    pub h: T,
    r: [[T; N]; 5],
}

impl<T: Real, const N: usize> DenseStep<T, N> {
    pub fn new(t0: T, h: T, y0: &[T; N], step: &RkStep<T, N>) -> Self {
        let k = &step.k;
        let mut r = [[T::zero(); N]; 5];
        for i in 0..N {
            let ydiff = step.y[i] - y0[i];
            let bspl = h * k[0][i] - ydiff;
            r[0][i] = y0[i];
            r[1][i] = ydiff;
            r[2][i] = bspl;
            r[3][i] = ydiff - h * k[6][i] - bspl;
            r[4][i] = h
                * (lit::<T>(D1) * k[0][i]
                    + lit::<T>(D3) * k[2][i]
                    + lit::<T>(D4) * k[3][i]
                    + lit::<T>(D5) * k[4][i]
                    + lit::<T>(D6) * k[5][i]
                    + lit::<T>(D7) * k[6][i]);
        }
        Self { t0, h, r }
    }

    pub fn eval(&self, t: T) -> [T; N] {
        let s = (t - self.t0) / self.h;
        let s1 = T::one() - s;
        let mut out = [T::zero(); N];
        for i in 0..N {
            let r = &self.r;
            out[i] = r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i])));
        }
        out
    }
}

/// Adaptive stepper state.
pub struct Stepper<T, F, const N: usize> {
    f: F,
    pub t: T,
    pub y: [T; N],
    k1: [T; N],
    h: T,
    err_prev: T,
    tol: Tolerances<T>,
    pub h_max: T,
    pub h_min: T,
    pub rejected: usize,
}

/// Result of one accepted step.
pub struct Accepted<T, const N: usize> {
    pub t0: T,
    pub y0: [T; N],
    pub k1: [T; N],
    pub dense: DenseStep<T, N>,
}

impl<T, F, const N: usize> Stepper<T, F, N>
where
    T: Real,
    F: Fn(&[T; N]) -> Result<[T; N]>,
{
    pub fn new(f: F, t0: T, y0: [T; N], tol: Tolerances<T>, h_max: T) -> Result<Self> {
        let k1 = f(&y0)?;
        let mut s = Self {
            f,
            t: t0,
            y: y0,
            k1,
            h: T::zero(),
            err_prev: lit(1e-4),
            tol,
            h_max,
            h_min: lit(1e-14),
            rejected: 0,
        };
        s.h = s.initial_step()?;
        Ok(s)
    }

    pub fn rhs(&self) -> &F {
        &self.f
    }

    fn scale(&self, a: T, b: T) -> T {
        self.tol.abs + self.tol.rel * a.abs().max(b.abs())
    }

    fn err_norm(&self, y0: &[T; N], y1: &[T; N], err: &[T; N]) -> T {
        let mut acc = T::zero();
        for i in 0..N {
            let e = err[i] / self.scale(y0[i], y1[i]);
            acc += e * e;
        }
        (acc / lit::<T>(N as f64)).sqrt()
    }

    // Hairer's starting step heuristic.
    fn initial_step(&self) -> Result<T> {
        let mut d0 = T::zero();
        let mut d1 = T::zero();
        for i in 0..N {
            let sc = self.scale(self.y[i], self.y[i]);
            d0 += (self.y[i] / sc).powi(2);
            d1 += (self.k1[i] / sc).powi(2);
        }
        let n = lit::<T>(N as f64);
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let mut h0 = if d0 < lit(1e-5) || d1 < lit(1e-5) {
            lit(1e-6)
        } else {
            lit::<T>(0.01) * d0 / d1
        };
        h0 = h0.min(self.h_max);
        let y1 = axpy(&self.y, h0, &[(1.0, &self.k1)]);
        let k2 = (self.f)(&y1)?;
        let mut d2 = T::zero();
        for i in 0..N {
            let sc = self.scale(self.y[i], self.y[i]);
            d2 += ((k2[i] - self.k1[i]) / sc).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let dm = d1.max(d2);
        let h1 = if dm <= lit(1e-15) {
            (h0 * lit(1e-3)).max(lit(1e-6))
        } else {
            (lit::<T>(0.01) / dm).powf(lit(0.2))
        };
        Ok((lit::<T>(100.0) * h0).min(h1).min(self.h_max))
    }

    /// Advances by one accepted step, never past `t_stop`.
    pub fn step(&mut self, t_stop: T) -> Result<Accepted<T, N>> {
        let beta: T = lit(0.04);
        let expo: T = lit::<T>(0.2) - beta * lit::<T>(0.75);
        let safe: T = lit(0.9);
        loop {
            let mut h = self.h.min(self.h_max);
            let remaining = t_stop - self.t;
            let mut clipped = false;
            if h >= remaining {
                h = remaining;
                clipped = true;
            }
            if h < self.h_min {
                if clipped && h > T::zero() {
                    // land exactly on t_stop
                } else {
                    return Err(HopperError::StepSizeUnderflow {
                        t: self.t.to_f64_lossy(),
                        h: h.to_f64_lossy(),
                    });
                }
            }
            let step = dopri_step(&self.f, &self.y, &self.k1, h)?;
            if !step.y.iter().all(|v| v.is_finite()) {
                self.h = h * lit(0.25);
                self.rejected += 1;
                if self.h < self.h_min {
                    return Err(HopperError::NonFinite { t: self.t.to_f64_lossy() });
                }
                continue;
            }
            let err = self.err_norm(&self.y, &step.y, &step.err);
            if err <= T::one() {
                let err = err.max(lit(1e-10));
                let fac = (safe * err.powf(-expo) * self.err_prev.powf(beta)).clamp(lit(0.2), lit(10.0));
                self.err_prev = err;
                let t0 = self.t;
                let y0 = self.y;
                let k1 = self.k1;
                let dense = DenseStep::new(t0, h, &y0, &step);
                self.t = if clipped { t_stop } else { t0 + h };
                self.y = step.y;
                self.k1 = step.k[6];
                if !clipped {
                    self.h = h * fac;
                }
                return Ok(Accepted { t0, y0, k1, dense });
            }
            let fac = (safe * err.powf(-lit::<T>(0.2))).max(lit(0.1));
            self.h = h * fac;
            self.rejected += 1;
        }
    }

    /// Exact (non-interpolated) solution at `t0 + h` from a stored step start.
    pub fn exact_from(&self, y0: &[T; N], k1: &[T; N], h: T) -> Result<[T; N]> {
        if h == T::zero() {
            return Ok(*y0);
        }
        Ok(dopri_step(&self.f, y0, k1, h)?.y)
    }

    /// Restarts after an externally applied jump at the current time.
    pub fn reset_state(&mut self, y: [T; N]) -> Result<()> {
        self.y = y;
        self.k1 = (self.f)(&y)?;
        Ok(())
    }
}

/// Brent's method on a bracket `[a, b]` with `f(a)` and `f(b)` of opposite
/// sign (or one of them zero). Stops when `|f| <= ftol` or the bracket is
/// below `xtol`.
pub fn brent<T, G>(mut g: G, a: T, b: T, fa: T, fb: T, ftol: T, xtol: T, max_iter: usize) -> Result<(T, T)>
where
    T: Real,
    G: FnMut(T) -> Result<T>,
{
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    if fa == T::zero() {
        return Ok((a, fa));
    }
    if fb == T::zero() {
        return Ok((b, fb));
    }
    debug_assert!(fa.signum() != fb.signum(), "root not bracketed");
    let two: T = lit(2.0);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = two * T::epsilon() * b.abs() + xtol * lit(0.5);
        let xm = (c - b) / two;
        if fb.abs() <= ftol || xm.abs() <= tol1 {
            return Ok((b, fb));
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * xm * s;
                q = T::one() - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (two * xm * qq * (qq - r) - (b - a) * (r - T::one()));
                q = (qq - T::one()) * (r - T::one()) * (s - T::one());
            }
            if p > T::zero() {
                q = -q;
            }
            p = p.abs();
            let min1 = lit::<T>(3.0) * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b = if d.abs() > tol1 { b + d } else { b + tol1 * xm.signum() };
        fb = g(b)?;
    }
    Ok((b, fb))
}
