//! CSV writers for trajectories, events, sweeps and velocity maps.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so the
//! same data always produces the same bytes.

use std::io::Write;

use crate::hybrid::Trajectory;
use crate::num::Real;
use crate::stability::{SweepCell, VelocityMap};

pub const STATE_COLUMNS: [&str; 10] = ["x_c", "y_c", "x_f", "y_f", "theta", "vx_c", "vy_c", "vx_f", "vy_f", "omega"];

fn num<T: Real>(v: T) -> String {
    let v = v.to_f64_lossy();
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn header(w: &mut csv::Writer<impl Write>, head: &[&str], tail: &[&str]) -> csv::Result<()> {
    w.write_record(head.iter().chain(tail.iter()))
}

/// `t,x_c,...,omega,tau,xi,phase`, one row per dense sample.
pub fn write_trajectory<T: Real, W: Write>(out: W, traj: &Trajectory<T>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut cols = vec!["t"];
    cols.extend(STATE_COLUMNS);
    header(&mut w, &cols, &["tau", "xi", "phase"])?;
    for s in &traj.samples {
        let mut row = vec![num(s.t)];
        row.extend(s.state.to_array().iter().map(|v| num(*v)));
        row.push(num(s.u.tau));
        row.push(num(s.u.xi));
        row.push(s.phase.as_str().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `t,kind,x_c,...,omega` with pre-reset event states.
pub fn write_events<T: Real, W: Write>(out: W, traj: &Trajectory<T>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    header(&mut w, &["t", "kind"], &STATE_COLUMNS)?;
    for e in &traj.events {
        let mut row = vec![num(e.time), e.kind.as_str().to_string()];
        row.extend(e.state.to_array().iter().map(|v| num(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `vx_des,l0_swing,steps_survived`.
pub fn write_sweep<T: Real, W: Write>(out: W, cells: &[SweepCell<T>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["vx_des", "l0_swing", "steps_survived"])?;
    for c in cells {
        w.write_record([num(c.vx_des), num(c.l0_swing), c.steps_survived.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `k,v_k,v_k1`, one row per consecutive apex pair.
pub fn write_velocity_map<T: Real, W: Write>(out: W, map: &VelocityMap<T>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "v_k", "v_k1"])?;
    for (k, (a, b)) in map.pairs().into_iter().enumerate() {
        w.write_record([k.to_string(), num(a), num(b)])?;
    }
    w.flush()?;
    Ok(())
}
