//! Free-boundary SEIS epidemic model: parameters, coordinate maps, the
//! moving-front PDE solver, the spatially homogeneous ODE, threshold
//! quantities and the linearised eigenproblem.

pub mod eigen;
pub mod error;
pub mod model;
pub mod ode;
pub mod solver;
pub mod thresholds;
pub mod transform;
pub mod tridiag;

pub use error::{Error, Result, Warning};
pub use model::{
    default_initial_profiles, validate_params, Amplitudes, CheckedParams, Grid, InitialData,
    ModelParams, SimState,
};
pub use solver::{run, step, SolverConfig, Trajectory};
