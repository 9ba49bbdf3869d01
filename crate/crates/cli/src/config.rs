//! Experiment configuration: a TOML document whose omitted fields fall back
//! to the reference parameter set. Angles are given in degrees.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ulthop::stability::GridAxis;
use ulthop::{ControlParams64, ModelParams64, NewtonOptions, RetractionMode, SimOptions64, Tolerances};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub m_c: f64,
    pub m_f: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub d: f64,
    pub k: f64,
    pub l0: f64,
    pub g: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelParams64::reference();
        Self {
            m_c: m.m_c,
            m_f: m.m_f,
            j: m.j,
            d: m.d,
            k: m.k,
            l0: m.l_0,
            g: m.g,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub c: f64,
    pub b: f64,
    pub phi_0_deg: f64,
    #[serde(rename = "K")]
    pub k_gain: f64,
    pub d_vpp: f64,
    pub delta_deg: f64,
    pub vx_des: f64,
    pub l0_swing: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        let c = ControlParams64::reference();
        Self {
            c: c.c,
            b: c.b,
            phi_0_deg: 70.0,
            k_gain: c.k_gain,
            d_vpp: c.d_vpp,
            delta_deg: c.delta.to_degrees(),
            vx_des: c.vx_des,
            l0_swing: c.l0_swing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TolSection {
    pub abs: f64,
    pub rel: f64,
}

impl Default for TolSection {
    fn default() -> Self {
        let t = Tolerances::<f64>::default();
        Self { abs: t.abs, rel: t.rel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub cycles: usize,
    /// Dense-output sampling period (s).
    pub sample_dt: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            cycles: 10,
            sample_dt: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// `lo:hi:step`
    pub vx: String,
    /// `lo:hi:step`
    pub l0: String,
    pub max_steps: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            vx: "3.0:6.0:0.1".into(),
            l0: "0.05:0.15:0.002".into(),
            max_steps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub max_iter: usize,
    pub tol: f64,
    pub eps: f64,
    /// Relative apex-height perturbation for the robustness run.
    pub perturbation: f64,
    pub track_cycles: usize,
}

impl Default for StabilitySection {
    fn default() -> Self {
        let n = NewtonOptions::<f64>::default();
        Self {
            max_iter: n.max_iter,
            tol: n.tol,
            eps: n.eps,
            perturbation: -0.075,
            track_cycles: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VelocityMapSection {
    pub cycles: usize,
    pub adapt_phi: bool,
}

impl Default for VelocityMapSection {
    fn default() -> Self {
        Self {
            cycles: 100,
            adapt_phi: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub retraction_mode: RetractionMode,
    /// Initial flight state `[x_c, y_c, x_f, y_f, theta, vx_c, vy_c, vx_f, vy_f, omega]`
    /// in SI units (radians for the trunk angle). Defaults to the nominal apex.
    pub initial: Option<[f64; 10]>,
    pub output_dir: PathBuf,
    pub model: ModelSection,
    pub control: ControlSection,
    pub tolerances: TolSection,
    pub simulate: SimulateSection,
    pub sweep: SweepSection,
    pub stability: StabilitySection,
    pub velocity_map: VelocityMapSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            retraction_mode: RetractionMode::Relative,
            initial: None,
            output_dir: PathBuf::from("out"),
            model: ModelSection::default(),
            control: ControlSection::default(),
            tolerances: TolSection::default(),
            simulate: SimulateSection::default(),
            sweep: SweepSection::default(),
            stability: StabilitySection::default(),
            velocity_map: VelocityMapSection::default(),
        }
    }
}

/// Parses `lo:hi:step`.
pub fn parse_axis(spec: &str) -> Result<GridAxis<f64>, ConfigError> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.parse::<f64>()).collect();
    match nums.as_deref() {
        Ok([lo, hi, step]) if lo.is_finite() && hi.is_finite() && *step > 0.0 && hi >= lo => {
            Ok(GridAxis::new(*lo, *hi, *step))
        }
        Ok([v]) if v.is_finite() => Ok(GridAxis::single(*v)),
        _ => Err(ConfigError::Invalid(format!(
            "bad grid axis '{spec}' (expected lo:hi:step with step > 0 and hi >= lo)"
        ))),
    }
}

/// Parses `vx:lo:hi:step,l0:lo:hi:step` into the sweep section.
pub fn apply_grid(sweep: &mut SweepSection, spec: &str) -> Result<(), ConfigError> {
    for part in spec.split(',') {
        let (name, axis) = part
            .split_once(':')
            .ok_or_else(|| ConfigError::Invalid(format!("bad grid spec '{part}'")))?;
        parse_axis(axis)?;
        match name.trim() {
            "vx" => sweep.vx = axis.to_string(),
            "l0" => sweep.l0 = axis.to_string(),
            other => return Err(ConfigError::Invalid(format!("unknown grid axis '{other}' (expected vx or l0)"))),
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source: Box::new(source),
        })?;
        Ok((cfg, text))
    }

    pub fn model_params(&self) -> ModelParams64 {
        let m = &self.model;
        ModelParams64 {
            m_c: m.m_c,
            m_f: m.m_f,
            j: m.j,
            d: m.d,
            k: m.k,
            l_0: m.l0,
            g: m.g,
        }
    }

    pub fn control_params(&self) -> ControlParams64 {
        let c = &self.control;
        ControlParams64 {
            c: c.c,
            b: c.b,
            phi_0: c.phi_0_deg.to_radians(),
            k_gain: c.k_gain,
            d_vpp: c.d_vpp,
            delta: c.delta_deg.to_radians(),
            vx_des: c.vx_des,
            l0_swing: c.l0_swing,
            retraction: self.retraction_mode,
        }
    }

    pub fn sim_options(&self) -> SimOptions64 {
        SimOptions64 {
            tol: Tolerances {
                abs: self.tolerances.abs,
                rel: self.tolerances.rel,
            },
            sample_dt: self.simulate.sample_dt,
            ..SimOptions64::default()
        }
    }

    pub fn newton_options(&self) -> NewtonOptions<f64> {
        NewtonOptions {
            max_iter: self.stability.max_iter,
            tol: self.stability.tol,
            eps: self.stability.eps,
        }
    }

    pub fn grid(&self) -> Result<(GridAxis<f64>, GridAxis<f64>), ConfigError> {
        Ok((parse_axis(&self.sweep.vx)?, parse_axis(&self.sweep.l0)?))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: ulthop::HopperError| ConfigError::Invalid(e.to_string());
        let mp = self.model_params();
        mp.validate().map_err(invalid)?;
        self.control_params().validate(&mp).map_err(invalid)?;
        self.sim_options().tol.validate().map_err(invalid)?;
        if !(self.simulate.sample_dt > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "simulate.sample_dt must be > 0, got {}",
                self.simulate.sample_dt
            )));
        }
        if let Some(init) = &self.initial {
            if init.iter().any(|v| !v.is_finite()) {
                return Err(ConfigError::Invalid("initial state must be finite".into()));
            }
        }
        if !(self.stability.tol > 0.0 && self.stability.eps > 0.0) {
            return Err(ConfigError::Invalid("stability.tol and stability.eps must be > 0".into()));
        }
        self.grid()?;
        Ok(())
    }
}
