use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the model, transforms, solvers and analyses.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{field}` out of domain: {reason}")]
    ParamDomain { field: &'static str, reason: String },

    #[error("initial amplitude out of domain: {0}")]
    Amplitude(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("front h = {h} leaves the diffeomorphism window |h - h_ref| <= h_ref/8 (h_ref = {h_ref})")]
    Diffeomorphism { h: f64, h_ref: f64 },

    #[error("step rejected at t = {t}: {reason}")]
    StepRejected { t: f64, reason: String },

    #[error("negative {field} value {value:e} at node {node} (t = {t})")]
    Positivity {
        field: &'static str,
        node: usize,
        value: f64,
        t: f64,
    },

    #[error("integration blew up at t = {0}")]
    Blowup(f64),

    #[error("energy weights must be positive (a12 = {a12}, a22 = {a22})")]
    WeightSign { a12: f64, a22: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("shift {0} is (numerically) an eigenvalue")]
    SingularShift(f64),

    #[error("fit window holds {got} samples, need at least {need}")]
    WindowTooShort { got: usize, need: usize },

    #[error("norm is not decaying over the fit window (slope {slope})")]
    NonDecay { slope: f64 },
}

/// Non-fatal findings. Callers decide whether to log or surface them.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// d1, d2, d3 differ; long-time analyses assume equal diffusion.
    UnequalDiffusion { d1: f64, d2: f64, d3: f64 },
    /// The Stefan speed came out negative beyond tolerance.
    NegativeSpeed { t: f64, h_prime: f64 },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::UnequalDiffusion { d1, d2, d3 } => write!(
                f,
                "unequal diffusion (d1 = {d1}, d2 = {d2}, d3 = {d3}): long-time analyses disabled"
            ),
            Warning::NegativeSpeed { t, h_prime } => {
                write!(f, "negative front speed {h_prime:e} at t = {t}")
            }
        }
    }
}
