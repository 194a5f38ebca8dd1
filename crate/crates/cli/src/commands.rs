//! The five subcommands. Each reads a [`Scenario`] and writes its artifacts
//! into an output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use seis_core::eigen::{
    decay_rate_fit, direct_eigensolve, rayleigh_minimize, EigenSetup, MinimizeOptions, Seed,
};
use seis_core::ode::{ode_run, OdeState};
use seis_core::thresholds::{classify, threshold_report, ClassifyTolerances, Regime, ThresholdReport};
use seis_core::{run, Trajectory};

use crate::io::{
    fmt_f64, svg_plot, write_fields, write_monitors, write_table, write_trajectory, Series,
};
use crate::scenario::{Axis, Scenario, SetError};

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

/// Runs the PDE solver for a scenario; monitor events are logged, not fatal.
pub fn simulate(scenario: &Scenario) -> Result<Trajectory> {
    let grid = scenario.grid()?;
    let initial = scenario.initial_data()?;
    let traj = run(&scenario.params, &initial, &grid, &scenario.solver)
        .with_context(|| format!("scenario `{}`", scenario.name))?;
    for w in &traj.warnings {
        log::warn!("{w}");
    }
    if !traj.monitor_events.is_empty() {
        log::warn!(
            "{}: {} monitor event(s), see monitors.csv",
            scenario.name,
            traj.monitor_events.len()
        );
    }
    Ok(traj)
}

/// trajectory.csv, monitors.csv, and optionally fields.csv and front.svg.
pub fn cmd_simulate(scenario: &Scenario, out: &Path) -> Result<Trajectory> {
    prepare(out)?;
    let traj = simulate(scenario)?;
    write_trajectory(&out.join("trajectory.csv"), &traj)?;
    write_monitors(&out.join("monitors.csv"), &traj.monitor_events)?;
    if scenario.outputs.fields {
        write_fields(&out.join("fields.csv"), &traj.snapshots)?;
    }
    if scenario.outputs.plots {
        let svg = svg_plot(
            &format!("{}: front h(t)", scenario.name),
            &[Series {
                label: "h",
                x: &traj.times,
                y: &traj.h,
            }],
        );
        fs::write(out.join("front.svg"), svg)?;
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub thresholds: ThresholdReport,
    pub observed: Regime,
}

impl Classification {
    pub fn agreement(&self) -> bool {
        self.thresholds.predicted_regime == self.observed
            && self.observed != Regime::Indeterminate
    }

    pub fn render(&self) -> String {
        let t = &self.thresholds;
        let mut s = String::new();
        let _ = writeln!(s, "r0_max = {}", fmt_f64(t.r0_max));
        let _ = writeln!(s, "r0_min = {}", fmt_f64(t.r0_min));
        let _ = writeln!(s, "lambda1_h0 = {}", fmt_f64(t.lambda1_h0));
        let _ = writeln!(s, "critical_radius = {}", fmt_f64(t.critical_radius));
        let _ = writeln!(s, "predicted_regime = {}", t.predicted_regime);
        let _ = writeln!(s, "observed_regime = {}", self.observed);
        let _ = writeln!(s, "agreement = {}", self.agreement());
        let _ = writeln!(s, "contested = {}", t.contested);
        s
    }
}

fn classify_scenario(scenario: &Scenario) -> Result<(Classification, Trajectory)> {
    let thresholds = threshold_report(&scenario.params, &scenario.initial_data()?)?;
    let traj = simulate(scenario)?;
    let observed = classify(&traj, &ClassifyTolerances::default());
    Ok((
        Classification {
            thresholds,
            observed,
        },
        traj,
    ))
}

/// report.txt with thresholds, predicted and observed regimes.
pub fn cmd_classify(scenario: &Scenario, out: &Path) -> Result<Classification> {
    prepare(out)?;
    let (c, _) = classify_scenario(scenario)?;
    fs::write(out.join("report.txt"), c.render())?;
    Ok(c)
}

fn with_axis_values(base: &Scenario, axes: &[Axis], values: &[f64]) -> Result<Scenario> {
    let mut s = base.clone();
    for (axis, &v) in axes.iter().zip(values) {
        // integral values stay integers so count-valued keys accept them
        let text = if v.fract() == 0.0 && v.abs() < 1e15 {
            format!("{}", v as i64)
        } else {
            fmt_f64(v)
        };
        match s.set(&axis.key, &text) {
            Ok(()) => {}
            Err(SetError::Unknown) => bail!("unknown sweep key `{}`", axis.key),
            Err(SetError::Value(m)) => bail!("sweep key `{}`: {m}", axis.key),
        }
    }
    s.validate()?;
    Ok(s)
}

/// Cartesian sweep over one or two axes. Cells run in parallel; rows are
/// sorted by axis values. A failing cell is reported in the `status` column.
pub fn cmd_sweep(
    scenario: &Scenario,
    axes: &[Axis],
    threads: Option<usize>,
    out: &Path,
) -> Result<usize> {
    if axes.is_empty() || axes.len() > 2 {
        bail!("a sweep needs one or two axes, got {}", axes.len());
    }
    // surface bad keys before spending any time
    with_axis_values(scenario, axes, &axes.iter().map(|a| a.start).collect::<Vec<_>>())?;
    prepare(out)?;

    let mut cells: Vec<Vec<f64>> = axes[0].values().into_iter().map(|v| vec![v]).collect();
    if let Some(second) = axes.get(1) {
        cells = cells
            .into_iter()
            .flat_map(|c| {
                second.values().into_iter().map(move |v| {
                    let mut c = c.clone();
                    c.push(v);
                    c
                })
            })
            .collect();
    }
    cells.sort_by(|a, b| a.partial_cmp(b).expect("axis values are finite"));

    let run_cell = |values: &Vec<f64>| -> Vec<String> {
        let mut row: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
        let result = with_axis_values(scenario, axes, values)
            .and_then(|mut s| {
                s.solver.snapshot_every = 0;
                classify_scenario(&s)
            });
        match result {
            Ok((c, traj)) => {
                let t = &c.thresholds;
                row.extend([
                    fmt_f64(t.r0_max),
                    fmt_f64(t.r0_min),
                    fmt_f64(t.critical_radius),
                    t.predicted_regime.to_string(),
                    c.observed.to_string(),
                    c.agreement().to_string(),
                    fmt_f64(*traj.h.last().unwrap()),
                    fmt_f64(*traj.sup_i.last().unwrap()),
                    traj.monitor_events.len().to_string(),
                    "ok".into(),
                ]);
            }
            Err(e) => {
                log::warn!("sweep cell {values:?} failed: {e:#}");
                row.extend(std::iter::repeat_n(String::new(), 9));
                row.push(format!("error: {e:#}"));
            }
        }
        row
    };
    let rows: Vec<Vec<String>> = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(|| cells.par_iter().map(run_cell).collect()),
        None => cells.par_iter().map(run_cell).collect(),
    };

    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    let mut header: Vec<&str> = axes.iter().map(|a| a.key.as_str()).collect();
    header.extend([
        "r0_max",
        "r0_min",
        "critical_radius",
        "predicted_regime",
        "observed_regime",
        "agreement",
        "h_final",
        "sup_I_final",
        "monitor_events",
        "status",
    ]);
    w.write_record(&header)?;
    for row in &rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(rows.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSummary {
    pub h_inf: f64,
    pub direct_rate: f64,
    pub rayleigh: f64,
    pub fitted_rate: Option<f64>,
}

/// eigen.csv and modes.svg for the front reached by the scenario's run.
pub fn cmd_eigen(scenario: &Scenario, out: &Path) -> Result<EigenSummary> {
    prepare(out)?;
    let traj = simulate(scenario)?;
    let h_inf = *traj.h.last().expect("run records the initial state");
    let setup = EigenSetup::new(&scenario.params, h_inf, scenario.eigen_intervals())?;
    let direct = direct_eigensolve(&setup)?;

    let nan = f64::NAN;
    // (method, lambda1, lambda2, residual)
    let mut rows = vec![
        ("direct_rate", direct.rates.lambda1, direct.rates.lambda2, direct.rates.residual),
        ("direct_quotient", direct.quotient[0], direct.quotient[1], nan),
    ];
    let rayleigh = match rayleigh_minimize(
        &setup,
        &Seed::Random(scenario.eigen.seed),
        &MinimizeOptions::default(),
    ) {
        Ok(r) => {
            rows.push(("rayleigh_quotient", r.lambda1, r.lambda2, r.residual));
            r.lambda1
        }
        Err(e) => {
            log::warn!("variational solve failed: {e}");
            rows.push(("rayleigh_quotient", nan, nan, nan));
            nan
        }
    };
    let norms: Vec<f64> = traj.sup_e.iter().zip(&traj.sup_i).map(|(a, b)| a + b).collect();
    let fitted_rate = match decay_rate_fit(&traj.times, &norms, scenario.fit_window()) {
        Ok(f) => {
            rows.push(("decay_fit", f.rate, f.gap.map_or(nan, |g| f.rate + g), nan));
            Some(f.rate)
        }
        Err(e) => {
            log::warn!("decay fit failed: {e}");
            rows.push(("decay_fit", nan, nan, nan));
            None
        }
    };
    rows.push(("symmetrized_max", direct.symmetrized_max, nan, nan));

    let mut w = csv::Writer::from_path(out.join("eigen.csv"))?;
    w.write_record(["method", "h_inf", "lambda1", "lambda2", "residual"])?;
    for (method, l1, l2, res) in rows {
        w.write_record([method.to_string(), fmt_f64(h_inf), fmt_f64(l1), fmt_f64(l2), fmt_f64(res)])?;
    }
    w.flush()?;

    if scenario.outputs.plots {
        let r = setup.radii();
        let svg = svg_plot(
            &format!("{}: leading mode on [0, {h_inf:.4}]", scenario.name),
            &[
                Series {
                    label: "phi1 (E)",
                    x: &r,
                    y: &direct.rates.phi1,
                },
                Series {
                    label: "psi1 (I)",
                    x: &r,
                    y: &direct.rates.psi1,
                },
            ],
        );
        fs::write(out.join("modes.svg"), svg)?;
    }
    Ok(EigenSummary {
        h_inf,
        direct_rate: direct.rates.lambda1,
        rayleigh,
        fitted_rate,
    })
}

/// ode.csv for the spatially homogeneous system started at
/// `(A/mu1, c_E, c_I)`.
pub fn cmd_ode(scenario: &Scenario, out: &Path) -> Result<Vec<OdeState>> {
    prepare(out)?;
    let p = &scenario.params;
    let start = OdeState::new(p.dfe_s(), scenario.amplitudes.c_e, scenario.amplitudes.c_i);
    let states = ode_run(start, p, scenario.ode_dt(), scenario.solver.t_end)?;
    let rows: Vec<Vec<f64>> = states.iter().map(|s| vec![s.t, s.s, s.e, s.i]).collect();
    write_table(&out.join("ode.csv"), &["t", "S", "E", "I"], &rows)?;
    if scenario.outputs.plots {
        let col = |f: fn(&OdeState) -> f64| states.iter().map(f).collect::<Vec<_>>();
        let (t, s, e, i) = (col(|x| x.t), col(|x| x.s), col(|x| x.e), col(|x| x.i));
        let svg = svg_plot(
            &format!("{}: homogeneous dynamics", scenario.name),
            &[
                Series { label: "S", x: &t, y: &s },
                Series { label: "E", x: &t, y: &e },
                Series { label: "I", x: &t, y: &i },
            ],
        );
        fs::write(out.join("ode.svg"), svg)?;
    }
    Ok(states)
}
