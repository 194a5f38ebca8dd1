use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use seis_cli::{cmd_classify, cmd_eigen, cmd_ode, cmd_simulate, cmd_sweep, load_scenario, Axis, Scenario};

#[derive(Parser)]
#[command(name = "seis", version, about = "Free-boundary SEIS epidemic simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (`key = value` lines).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; defaults to `out/<scenario name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel work.
    #[arg(long)]
    threads: Option<usize>,
    /// Store field snapshots every N steps (0 disables them).
    #[arg(long)]
    snapshot_every: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the moving-front solver.
    Simulate(Common),
    /// Compare threshold predictions with the simulated outcome.
    Classify(Common),
    /// Sweep one or two scenario keys.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `key=start:stop:count`; repeat for a second axis. Overrides sweep.axis* keys.
        #[arg(long)]
        axis: Vec<Axis>,
    },
    /// Principal eigenvalue of the linearisation at the final front.
    Eigen(Common),
    /// Integrate the spatially homogeneous system.
    Ode(Common),
}

fn load(common: &Common) -> Result<(Scenario, PathBuf)> {
    let mut scenario = load_scenario(&common.scenario)?;
    if let Some(n) = common.snapshot_every {
        scenario.solver.snapshot_every = n;
    }
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(&scenario.name));
    Ok((scenario, out))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let (s, out) = load(&c)?;
            let traj = cmd_simulate(&s, &out)?;
            println!(
                "{}: t = {}, h = {}, {} monitor event(s) -> {}",
                s.name,
                traj.times.last().unwrap(),
                traj.h.last().unwrap(),
                traj.monitor_events.len(),
                out.display()
            );
        }
        Command::Classify(c) => {
            let (s, out) = load(&c)?;
            print!("{}", cmd_classify(&s, &out)?.render());
        }
        Command::Sweep { common, axis } => {
            let (s, out) = load(&common)?;
            let axes = if axis.is_empty() { s.axes.clone() } else { axis };
            let n = cmd_sweep(&s, &axes, common.threads, &out)?;
            println!("{n} cells -> {}", out.join("sweep.csv").display());
        }
        Command::Eigen(c) => {
            let (s, out) = load(&c)?;
            let e = cmd_eigen(&s, &out)?;
            println!(
                "h_inf = {}, lambda1 (direct) = {}, rayleigh = {}, fitted = {}",
                e.h_inf,
                e.direct_rate,
                e.rayleigh,
                e.fitted_rate.map_or("n/a".to_string(), |r| r.to_string())
            );
        }
        Command::Ode(c) => {
            let (s, out) = load(&c)?;
            let states = cmd_ode(&s, &out)?;
            let last = states.last().unwrap();
            println!("t = {}, S = {}, E = {}, I = {}", last.t, last.s, last.e, last.i);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
