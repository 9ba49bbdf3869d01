use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use ulthop::control::update_angle_of_attack;
use ulthop::hybrid::{advance_to_apex, simulate};
use ulthop::stability::{self, nominal_apex};
use ulthop::{export, ControllerState, Outcome, Phase, Reduced64, RetractionMode, State64};

mod config;
use config::{apply_grid, ConfigError, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "ulthop", version, about = "Hopper simulation and limit-cycle analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Chain gait cycles and write trajectory, events and per-cycle records.
    Simulate(Common),
    /// Steps-to-fall over a (vx_des, l0_swing) grid.
    Sweep(Common),
    /// Fixed point, Floquet multipliers and an apex-height perturbation run.
    Stability(Common),
    /// Successive apex forward velocities.
    VelocityMap(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML experiment config; omitted fields take the reference defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of cycles to run.
    #[arg(long)]
    cycles: Option<usize>,
    /// Sweep grid, e.g. `vx:3:6:0.1,l0:0.05:0.15:0.002`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, value_name = "absolute|relative")]
    retraction_mode: Option<RetractionMode>,
    /// Freeze the angle of attack at phi_0 (velocity-map).
    #[arg(long)]
    no_adapt_phi: bool,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
}

enum Failure {
    Config(ConfigError),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

struct Run {
    cfg: ExperimentConfig,
    raw: Option<String>,
    out: PathBuf,
}

fn prepare(common: &Common, which: &str) -> Result<Run, Failure> {
    let (mut cfg, raw) = match &common.config {
        Some(p) => {
            let (c, t) = ExperimentConfig::load(p)?;
            (c, Some(t))
        }
        None => (ExperimentConfig::default(), None),
    };
    if let Some(m) = common.retraction_mode {
        cfg.retraction_mode = m;
    }
    if let Some(v) = common.abs_tol {
        cfg.tolerances.abs = v;
    }
    if let Some(v) = common.rel_tol {
        cfg.tolerances.rel = v;
    }
    if let Some(g) = &common.grid {
        apply_grid(&mut cfg.sweep, g)?;
    }
    if common.no_adapt_phi {
        cfg.velocity_map.adapt_phi = false;
    }
    if let Some(n) = common.cycles {
        match which {
            "simulate" => cfg.simulate.cycles = n,
            "stability" => cfg.stability.track_cycles = n,
            "velocity-map" => cfg.velocity_map.cycles = n,
            _ => cfg.sweep.max_steps = n,
        }
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    let n = match which {
        "simulate" => cfg.simulate.cycles,
        "velocity-map" => cfg.velocity_map.cycles,
        "sweep" => cfg.sweep.max_steps,
        _ => 1,
    };
    if n == 0 {
        return Err(ConfigError::Invalid(format!("{which}: number of cycles must be at least 1")).into());
    }
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    if let Some(text) = &raw {
        fs::write(out.join("config.toml"), text)?;
    }
    let effective = toml::to_string(&cfg).context("serializing effective config")?;
    fs::write(out.join("effective_config.toml"), effective)?;
    Ok(Run { cfg, raw, out })
}

fn initial_state(cfg: &ExperimentConfig) -> State64 {
    match cfg.initial {
        Some(a) => State64::from_array(&a),
        None => nominal_apex::<f64>().embed(),
    }
}

/// Apex state reached from the configured initial state.
fn initial_apex(cfg: &ExperimentConfig) -> anyhow::Result<Reduced64> {
    let (mp, cp, opts) = (cfg.model_params(), cfg.control_params(), cfg.sim_options());
    let s = initial_state(cfg);
    let cs = ControllerState::new(update_angle_of_attack(s.v_c.x, &cp), Phase::Flight);
    let (apex, _) = advance_to_apex(&s, 0.0, &cs, &mp, &cp, &opts, None)
        .map_err(|f| anyhow::anyhow!("initial state does not reach an apex: {f}"))?;
    Ok(Reduced64::project(&apex))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct CyclesDoc<'a> {
    retraction_mode: RetractionMode,
    initial_apex: [f64; 10],
    cycles: &'a [ulthop::CycleRecord<f64>],
    outcome: &'a Outcome<f64>,
}

fn cmd_simulate(run: &Run) -> Result<u8, Failure> {
    let cfg = &run.cfg;
    let (mp, cp, opts) = (cfg.model_params(), cfg.control_params(), cfg.sim_options());
    let res = simulate(&initial_state(cfg), cfg.simulate.cycles, &mp, &cp, &opts, true);
    export::write_trajectory(create(&run.out.join("trajectory.csv"))?, &res.trajectory).context("trajectory.csv")?;
    export::write_events(create(&run.out.join("events.csv"))?, &res.trajectory).context("events.csv")?;
    write_json(
        &run.out.join("cycles.json"),
        &CyclesDoc {
            retraction_mode: cp.retraction,
            initial_apex: res.initial_apex.to_array(),
            cycles: &res.cycles,
            outcome: &res.outcome,
        },
    )?;
    println!("cycle  t_apex     y_c      theta    vx_c     phi_d[deg]");
    for (i, c) in res.cycles.iter().enumerate() {
        let a = &c.apex_state;
        println!(
            "{:5}  {:8.4}  {:7.4}  {:7.4}  {:7.4}  {:7.2}",
            i,
            c.t_apex,
            a.r_c.y,
            a.theta,
            a.v_c.x,
            c.phi_d_next.to_degrees()
        );
    }
    match &res.outcome {
        Outcome::Completed => {
            println!("completed {} cycles", res.cycles.len());
            Ok(0)
        }
        Outcome::Fell { cycle, fall } => {
            println!("fell in cycle {cycle}: {fall}");
            Ok(1)
        }
    }
}

fn cmd_sweep(run: &Run) -> Result<u8, Failure> {
    let cfg = &run.cfg;
    let (mp, cp, opts) = (cfg.model_params(), cfg.control_params(), cfg.sim_options());
    let (vx, l0) = cfg.grid()?;
    let start = initial_apex(cfg)?;
    let max = cfg.sweep.max_steps;
    let cells = stability::sweep(&vx, &l0, &start, max, &mp, &cp, &opts);
    export::write_sweep(create(&run.out.join("sweep.csv"))?, &cells).context("sweep.csv")?;
    let stable = cells.iter().filter(|c| c.survived(max)).count();
    println!("{stable} of {} cells survived {max} steps", cells.len());
    for c in cells.iter().filter(|c| c.survived(max)) {
        println!("  vx_des = {}, l0_swing = {}", c.vx_des, c.l0_swing);
    }
    Ok(0)
}

#[derive(Serialize)]
struct StabilityDoc<'a> {
    retraction_mode: RetractionMode,
    vx_des: f64,
    l0_swing: f64,
    report: &'a ulthop::StabilityReport64,
    perturbation: &'a ulthop::ConvergenceRecord<f64>,
}

fn cmd_stability(run: &Run) -> Result<u8, Failure> {
    let cfg = &run.cfg;
    let (mp, cp, opts) = (cfg.model_params(), cfg.control_params(), cfg.sim_options());
    let guess = match cfg.initial {
        Some(a) => Reduced64::from_full(&a),
        None => nominal_apex(),
    };
    let report = match stability::analyze(&guess, &mp, &cp, &opts, &cfg.newton_options()) {
        Ok(r) => r,
        Err(e) => {
            println!("no limit cycle: {e}");
            return Ok(1);
        }
    };
    let track = stability::perturb_and_track(
        &report.fixed_point,
        cfg.stability.perturbation,
        cfg.stability.track_cycles,
        &mp,
        &cp,
        &opts,
    );
    write_json(
        &run.out.join("stability.json"),
        &StabilityDoc {
            retraction_mode: cp.retraction,
            vx_des: cp.vx_des,
            l0_swing: cp.l0_swing,
            report: &report,
            perturbation: &track,
        },
    )?;
    println!("fixed point (10-vector): {:?}", report.fixed_point_full);
    println!("residual {:.3e} after {} Newton iterations", report.residual, report.newton_iterations);
    println!("Floquet multipliers:");
    for (re, im) in &report.multipliers {
        println!("  {re:+.6} {im:+.6}i   |{:.6}|", re.hypot(*im));
    }
    println!(
        "spectral radius {:.6} -> {}",
        report.spectral_radius,
        if report.stable { "stable" } else { "unstable" }
    );
    println!(
        "apex height {:+.1}%: {} (distance {:.3e} -> {:.3e})",
        cfg.stability.perturbation * 100.0,
        track.verdict,
        track.distances[0],
        track.distances.last().copied().unwrap_or(f64::NAN)
    );
    Ok(0)
}

fn cmd_velocity_map(run: &Run) -> Result<u8, Failure> {
    let cfg = &run.cfg;
    let (mp, cp, opts) = (cfg.model_params(), cfg.control_params(), cfg.sim_options());
    let start = initial_apex(cfg)?;
    let map = stability::velocity_return_map(&start, cfg.velocity_map.cycles, cfg.velocity_map.adapt_phi, &mp, &cp, &opts);
    export::write_velocity_map(create(&run.out.join("velocity_map.csv"))?, &map).context("velocity_map.csv")?;
    println!("initial apex velocity {:.6} m/s", map.initial);
    for (k, (a, b)) in map.pairs().iter().enumerate() {
        println!("  {k:3}  {a:.6} -> {b:.6}");
    }
    if let Some(r) = &map.fall {
        println!("fell after {} returns ({r})", map.velocities.len() - 1);
        return Ok(1);
    }
    match map.converged_to(1e-6) {
        Some(v) => println!("fixed point {v:.6} m/s (target {:.3})", cp.vx_des),
        None => println!("no fixed point within {} returns", map.velocities.len() - 1),
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, which) = match &cli.command {
        Command::Simulate(c) => (c, "simulate"),
        Command::Sweep(c) => (c, "sweep"),
        Command::Stability(c) => (c, "stability"),
        Command::VelocityMap(c) => (c, "velocity-map"),
    };
    let result = prepare(common, which).and_then(|run| {
        log::debug!("config source: {}", if run.raw.is_some() { "file" } else { "defaults" });
        match &cli.command {
            Command::Simulate(_) => cmd_simulate(&run),
            Command::Sweep(_) => cmd_sweep(&run),
            Command::Stability(_) => cmd_stability(&run),
            Command::VelocityMap(_) => cmd_velocity_map(&run),
        }
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
