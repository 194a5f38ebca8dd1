//! Scenario files, CSV/SVG output and the `seis` subcommands.
pub mod commands;
pub mod io;
pub mod scenario;

pub use commands::{cmd_classify, cmd_eigen, cmd_ode, cmd_simulate, cmd_sweep};
pub use io::{read_trajectory, write_trajectory};
pub use scenario::{load_scenario, parse_scenario, Axis, Scenario, ScenarioError};
