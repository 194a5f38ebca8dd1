//! Flat `key = value` scenario files.
//!
//! ```text
//! # comments start with '#'
//! name = vanishing
//! params.alpha = 0.5
//! initial.h0 = 1
//! grid.m_inner = 256
//! ```
//!
//! Keys carry a section prefix (`params.`, `initial.`, `grid.`, `solver.`,
//! `eigen.`, `ode.`, `sweep.`). Unknown keys and repeated keys are errors;
//! missing keys keep their defaults.

use std::collections::HashSet;
use std::path::Path;

use seis_core::model::default_initial_profiles;
use seis_core::{validate_params, Amplitudes, Grid, InitialData, ModelParams, SolverConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("invalid scenario")]
    Validation(#[from] seis_core::Error),
    #[error("cannot read scenario")]
    Io(#[from] std::io::Error),
}

/// Artifacts a command may write besides its main CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outputs {
    pub fields: bool,
    pub plots: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            fields: true,
            plots: true,
        }
    }
}

/// One sweep axis: `count` evenly spaced values of `key` from `start` to `stop`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        (0..self.count)
            .map(|k| self.start + (self.stop - self.start) * k as f64 / (self.count - 1) as f64)
            .collect()
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    /// `key start stop count`, or `key=start:stop:count`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s
            .split(|c: char| c.is_whitespace() || c == '=' || c == ':')
            .filter(|p| !p.is_empty())
            .collect();
        let [key, start, stop, count] = parts[..] else {
            return Err(format!("axis `{s}` must look like `key start stop count`"));
        };
        let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad number `{v}` in axis"));
        let count: usize = count
            .parse()
            .map_err(|_| format!("bad count `{count}` in axis"))?;
        if count == 0 {
            return Err("axis count must be >= 1".into());
        }
        Ok(Axis {
            key: key.to_string(),
            start: num(start)?,
            stop: num(stop)?,
            count,
        })
    }
}

/// Eigen analysis settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSettings {
    /// Mesh intervals; 0 means `grid.m_inner - 1`.
    pub intervals: usize,
    /// Decay fit window; negative values pick `[5/8, 1] * t_end`.
    pub window_start: f64,
    pub window_end: f64,
    pub seed: u64,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self {
            intervals: 0,
            window_start: -1.0,
            window_end: -1.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub params: ModelParams,
    pub h0: f64,
    pub amplitudes: Amplitudes,
    pub m_inner: usize,
    pub m_outer: usize,
    /// Outer truncation radius; 0 means `8 * h0`.
    pub r_max: f64,
    pub solver: SolverConfig,
    pub eigen: EigenSettings,
    /// ODE step; 0 means `solver.dt`.
    pub ode_dt: f64,
    pub axes: Vec<Axis>,
    pub outputs: Outputs,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            params: ModelParams::default(),
            h0: 1.0,
            amplitudes: Amplitudes::default(),
            m_inner: 256,
            m_outer: 64,
            r_max: 0.0,
            solver: SolverConfig::default(),
            eigen: EigenSettings::default(),
            ode_dt: 0.0,
            axes: Vec::new(),
            outputs: Outputs::default(),
        }
    }
}

fn parse_f64(v: &str) -> Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("expected a number, got `{v}`"))
}

fn parse_usize(v: &str) -> Result<usize, String> {
    v.parse::<usize>()
        .map_err(|_| format!("expected a non-negative integer, got `{v}`"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

/// Outcome of assigning one key.
pub enum SetError {
    Unknown,
    Value(String),
}

impl Scenario {
    /// Assigns `key = value`. Used by the parser and by sweeps.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SetError> {
        let f = |v: &str| parse_f64(v).map_err(SetError::Value);
        let u = |v: &str| parse_usize(v).map_err(SetError::Value);
        let b = |v: &str| parse_bool(v).map_err(SetError::Value);
        let p = &mut self.params;
        match key {
            "name" => {
                if value.is_empty()
                    || !value
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
                {
                    return Err(SetError::Value(format!(
                        "name must be non-empty and use only [A-Za-z0-9_.-], got `{value}`"
                    )));
                }
                self.name = value.to_string();
            }
            "params.A" => p.a = f(value)?,
            "params.alpha" => p.alpha = f(value)?,
            "params.mu1" => p.mu1 = f(value)?,
            "params.mu2" => p.mu2 = f(value)?,
            "params.mu3" => p.mu3 = f(value)?,
            "params.mu" => {
                let mu = f(value)?;
                (p.mu1, p.mu2, p.mu3) = (mu, mu, mu);
            }
            "params.r1" => p.r1 = f(value)?,
            "params.r2" => p.r2 = f(value)?,
            "params.beta1" => p.beta1 = f(value)?,
            "params.p" => p.p = f(value)?,
            "params.d1" => p.d1 = f(value)?,
            "params.d2" => p.d2 = f(value)?,
            "params.d3" => p.d3 = f(value)?,
            "params.d" => {
                let d = f(value)?;
                (p.d1, p.d2, p.d3) = (d, d, d);
            }
            "params.beta_front" => p.beta_front = f(value)?,
            "params.mu_front" => p.mu_front = f(value)?,
            "params.dim_n" => {
                p.dim_n = u32::try_from(u(value)?).map_err(|e| SetError::Value(e.to_string()))?
            }
            "initial.h0" => self.h0 = f(value)?,
            "initial.c_e" => self.amplitudes.c_e = f(value)?,
            "initial.c_i" => self.amplitudes.c_i = f(value)?,
            "grid.m_inner" => self.m_inner = u(value)?,
            "grid.m_outer" => self.m_outer = u(value)?,
            "grid.r_max" => self.r_max = f(value)?,
            "solver.dt" => self.solver.dt = f(value)?,
            "solver.t_end" => self.solver.t_end = f(value)?,
            "solver.snapshot_every" => self.solver.snapshot_every = u(value)?,
            "solver.record_every" => self.solver.record_every = u(value)?,
            "solver.theta" => self.solver.theta = f(value)?,
            "solver.positivity_clip" => self.solver.positivity_clip = b(value)?,
            "solver.positivity_tolerance" => self.solver.positivity_tolerance = f(value)?,
            "solver.monitor_tolerance" => self.solver.monitor_tolerance = f(value)?,
            "solver.front_corrector" => self.solver.front_corrector = b(value)?,
            "eigen.intervals" => self.eigen.intervals = u(value)?,
            "eigen.window_start" => self.eigen.window_start = f(value)?,
            "eigen.window_end" => self.eigen.window_end = f(value)?,
            "eigen.seed" => self.eigen.seed = u(value)? as u64,
            "ode.dt" => self.ode_dt = f(value)?,
            "sweep.axis1" | "sweep.axis2" => {
                let axis: Axis = value.parse().map_err(SetError::Value)?;
                let slot = if key == "sweep.axis1" { 0 } else { 1 };
                if self.axes.len() <= slot {
                    self.axes.resize(slot + 1, axis.clone());
                }
                self.axes[slot] = axis;
            }
            "outputs" => {
                let mut out = Outputs {
                    fields: false,
                    plots: false,
                };
                for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    match item {
                        "trajectory" => {}
                        "fields" => out.fields = true,
                        "plots" => out.plots = true,
                        other => {
                            return Err(SetError::Value(format!("unknown output `{other}`")))
                        }
                    }
                }
                self.outputs = out;
            }
            _ => return Err(SetError::Unknown),
        }
        Ok(())
    }

    pub fn r_max(&self) -> f64 {
        if self.r_max > 0.0 {
            self.r_max
        } else {
            8.0 * self.h0
        }
    }

    pub fn grid(&self) -> seis_core::Result<Grid> {
        Grid::new(self.h0, self.m_inner, self.m_outer, self.r_max())
    }

    pub fn initial_data(&self) -> seis_core::Result<InitialData> {
        default_initial_profiles(&self.params, &self.grid()?, self.amplitudes)
    }

    pub fn ode_dt(&self) -> f64 {
        if self.ode_dt > 0.0 {
            self.ode_dt
        } else {
            self.solver.dt
        }
    }

    pub fn eigen_intervals(&self) -> usize {
        if self.eigen.intervals > 0 {
            self.eigen.intervals
        } else {
            self.m_inner - 1
        }
    }

    pub fn fit_window(&self) -> (f64, f64) {
        let t = self.solver.t_end;
        let start = if self.eigen.window_start >= 0.0 {
            self.eigen.window_start
        } else {
            0.625 * t
        };
        let end = if self.eigen.window_end >= 0.0 {
            self.eigen.window_end
        } else {
            t
        };
        (start, end)
    }

    /// Runs every model-level validation.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let checked = validate_params(self.params)?;
        for w in &checked.warnings {
            log::warn!("{w}");
        }
        self.solver.validate()?;
        self.initial_data()?;
        if !(self.ode_dt >= 0.0 && self.ode_dt.is_finite()) {
            return Err(seis_core::Error::ParamDomain {
                field: "ode.dt",
                reason: format!("must be > 0, got {}", self.ode_dt),
            }
            .into());
        }
        Ok(())
    }
}

/// Parses and validates a scenario.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut scenario = Scenario::default();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ScenarioError::Parse {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ScenarioError::Parse {
                line,
                message: "empty key".into(),
            });
        }
        if !seen.insert(key.to_string()) {
            return Err(ScenarioError::Parse {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
        match scenario.set(key, value) {
            Ok(()) => {}
            Err(SetError::Unknown) => {
                return Err(ScenarioError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
            Err(SetError::Value(message)) => {
                return Err(ScenarioError::Parse {
                    line,
                    message: format!("`{key}`: {message}"),
                })
            }
        }
    }
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let s = parse_scenario("params.alpha = 0.5\ninitial.h0 = 2\n").unwrap();
        assert_eq!(s.params.alpha, 0.5);
        assert_eq!(s.h0, 2.0);
        assert_eq!(s.m_inner, 256);
        assert_eq!(s.r_max(), 16.0);
        assert_eq!(s.solver, SolverConfig::default());
        assert_eq!(s.params.mu1, ModelParams::default().mu1);
    }

    #[test]
    fn comments_and_blank_lines() {
        let s = parse_scenario("# header\n\nname = run-1  # trailing\nparams.d = 2\n").unwrap();
        assert_eq!(s.name, "run-1");
        assert_eq!((s.params.d1, s.params.d2, s.params.d3), (2.0, 2.0, 2.0));
    }

    #[test]
    fn negative_alpha_is_a_validation_error() {
        match parse_scenario("params.alpha = -1\n") {
            Err(ScenarioError::Validation(seis_core::Error::ParamDomain { field, .. })) => {
                assert_eq!(field, "alpha")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_key_names_the_key() {
        let err = parse_scenario("params.p = 0.5\nparams.p = 0.6\n").unwrap_err();
        match &err {
            ScenarioError::Parse { line, message } => {
                assert_eq!(*line, 2);
                assert!(message.contains("params.p"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            parse_scenario("params.gamma = 1\n"),
            Err(ScenarioError::UnknownKey { line: 1, .. })
        ));
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            parse_scenario("params.alpha 0.5\n"),
            Err(ScenarioError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_scenario("\nparams.alpha = abc\n"),
            Err(ScenarioError::Parse { line: 2, .. })
        ));
        assert!(parse_scenario("name = bad/name\n").is_err());
    }

    #[test]
    fn grid_errors_propagate() {
        assert!(matches!(
            parse_scenario("grid.m_inner = 8\n"),
            Err(ScenarioError::Validation(seis_core::Error::Grid(_)))
        ));
    }

    #[test]
    fn axes_parse() {
        let s = parse_scenario("sweep.axis1 = params.alpha 0.1 0.5 5\n").unwrap();
        assert_eq!(s.axes.len(), 1);
        let v = s.axes[0].values();
        assert_eq!(v.len(), 5);
        assert!((v[4] - 0.5).abs() < 1e-15);
        let a: Axis = "initial.h0=1:3:3".parse().unwrap();
        assert_eq!(a.values(), vec![1.0, 2.0, 3.0]);
        assert!("x 1 2".parse::<Axis>().is_err());
    }

    #[test]
    fn outputs_list() {
        let s = parse_scenario("outputs = trajectory, plots\n").unwrap();
        assert_eq!(
            s.outputs,
            Outputs {
                fields: false,
                plots: true
            }
        );
        assert!(parse_scenario("outputs = movie\n").is_err());
    }
}
