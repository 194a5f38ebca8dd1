//! Front-fixed IMEX time stepping of the free-boundary system.
//!
//! Each step computes the Stefan speed from the current fields, moves the
//! front explicitly, then advances `S`, `E`, `I` with a theta-weighted scheme:
//! diffusion and the mesh-advection term implicit, reaction explicit.
//! All stencils are assembled in physical radius on the (moving) node
//! positions, so the proportional inner map and the compressed outer map are
//! handled by the same code.

use crate::error::{Error, Result, Warning};
use crate::model::{validate_params, Grid, InitialData, ModelParams, SimState};
use crate::tridiag::Tridiag;

/// Absolute slack for the sign monitors (fields and front speed).
pub const NEGATIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between stored field snapshots; 0 disables snapshots.
    pub snapshot_every: usize,
    /// Steps between stored series entries. The final state is always stored.
    pub record_every: usize,
    /// Implicitness weight of the diffusion/advection operator, in `[0.5, 1]`.
    pub theta: f64,
    pub positivity_clip: bool,
    /// Values below `-positivity_tolerance` reject the step when clipping is off.
    pub positivity_tolerance: f64,
    /// Relative slack of the uniform-bound monitor.
    pub monitor_tolerance: f64,
    /// Re-solve each step once with the trapezoidal front update.
    pub front_corrector: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_end: 10.0,
            snapshot_every: 0,
            record_every: 1,
            theta: 1.0,
            positivity_clip: false,
            positivity_tolerance: 1e-8,
            monitor_tolerance: 0.05,
            front_corrector: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::ParamDomain { field, reason });
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("solver.dt", format!("must be > 0, got {}", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return bad("solver.t_end", format!("must be >= 0, got {}", self.t_end));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return bad("solver.theta", format!("must lie in [0.5, 1], got {}", self.theta));
        }
        if self.record_every == 0 {
            return bad("solver.record_every", "must be >= 1".into());
        }
        if !(self.monitor_tolerance >= 0.0) {
            return bad("solver.monitor_tolerance", "must be >= 0".into());
        }
        if !(self.positivity_tolerance >= 0.0) {
            return bad("solver.positivity_tolerance", "must be >= 0".into());
        }
        Ok(())
    }
}

/// Coefficients of one row of a three-point stencil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub sub: f64,
    pub diag: f64,
    pub sup: f64,
}

impl Stencil {
    pub fn apply(&self, left: f64, center: f64, right: f64) -> f64 {
        self.sub * left + self.diag * center + self.sup * right
    }
}

/// Stencil of `scale * (w_rr + (n-1)/r w_r)` at node `index` of a uniform
/// mesh `r_i = i * spacing`. Node 0 uses the symmetry limit `n w_rr` with a
/// reflected ghost node.
pub fn radial_laplacian_row(index: usize, spacing: f64, dim_n: u32, scale: f64) -> Stencil {
    let r = index as f64 * spacing;
    if index == 0 {
        center_row(spacing, dim_n, scale)
    } else {
        interior_row(r - spacing, r, r + spacing, dim_n, scale)
    }
}

fn center_row(spacing: f64, dim_n: u32, scale: f64) -> Stencil {
    let k = 2.0 * dim_n as f64 * scale / (spacing * spacing);
    Stencil {
        sub: 0.0,
        diag: -k,
        sup: k,
    }
}

/// Second-order three-point stencil on a nonuniform mesh.
fn interior_row(r_prev: f64, r: f64, r_next: f64, dim_n: u32, scale: f64) -> Stencil {
    let hm = r - r_prev;
    let hp = r_next - r;
    let sum = hm + hp;
    let curv = (n_minus_one(dim_n)) / r;
    let sub = 2.0 / (hm * sum) - curv * hp / (hm * sum);
    let sup = 2.0 / (hp * sum) + curv * hm / (hp * sum);
    let diag = -2.0 / (hm * hp) + curv * (hp - hm) / (hm * hp);
    Stencil {
        sub: scale * sub,
        diag: scale * diag,
        sup: scale * sup,
    }
}

fn n_minus_one(dim_n: u32) -> f64 {
    dim_n.saturating_sub(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FarEnd {
    /// The field vanishes on the node after the last unknown.
    Dirichlet,
    /// Zero flux at the last unknown.
    Neumann,
}

/// Spatial operator `d Delta_r + c d/dr` for the unknowns on `r`.
///
/// With [`FarEnd::Dirichlet`], `r` carries one more node than there are
/// unknowns (the boundary node).
fn assemble(r: &[f64], vel: &[f64], d: f64, dim_n: u32, end: FarEnd) -> Tridiag {
    let n = match end {
        FarEnd::Dirichlet => r.len() - 1,
        FarEnd::Neumann => r.len(),
    };
    let mut op = Tridiag::zeros(n);
    for k in 0..n {
        let mut row = if k == 0 {
            center_row(r[1] - r[0], dim_n, d)
        } else if end == FarEnd::Neumann && k == n - 1 {
            let hm = r[k] - r[k - 1];
            let c = 2.0 * d / (hm * hm);
            Stencil {
                sub: c,
                diag: -c,
                sup: 0.0,
            }
        } else {
            interior_row(r[k - 1], r[k], r[k + 1], dim_n, d)
        };
        let c = vel[k];
        if k > 0 && c != 0.0 && k + 1 < r.len() {
            row = add_advection(row, r[k] - r[k - 1], r[k + 1] - r[k], c);
        }
        op.sub[k] = row.sub;
        op.diag[k] = row.diag;
        op.sup[k] = if k + 1 < n { row.sup } else { 0.0 };
    }
    op
}

/// Adds `c w_r` to a row: central differences while the row stays an
/// M-matrix row (cell Peclet number small), first-order upwinding otherwise.
fn add_advection(row: Stencil, hm: f64, hp: f64, c: f64) -> Stencil {
    let sum = hm + hp;
    let central = Stencil {
        sub: row.sub - c * hp / (hm * sum),
        diag: row.diag + c * (hp - hm) / (hm * hp),
        sup: row.sup + c * hm / (hp * sum),
    };
    if central.sub >= 0.0 && central.sup >= 0.0 {
        return central;
    }
    if c > 0.0 {
        Stencil {
            sup: row.sup + c / hp,
            diag: row.diag - c / hp,
            ..row
        }
    } else {
        Stencil {
            sub: row.sub - c / hm,
            diag: row.diag + c / hm,
            ..row
        }
    }
}

/// Front speed `h' = -beta_front E_r(h) - mu_front I_r(h)` with second-order
/// backward differences in physical radius.
pub fn stefan_speed(state: &SimState, grid: &Grid, params: &ModelParams) -> (f64, Option<Warning>) {
    let m = grid.front();
    let dr = grid.ds() * state.h / grid.h0;
    let backward = |f: &[f64]| (3.0 * f[m] - 4.0 * f[m - 1] + f[m - 2]) / (2.0 * dr);
    let h_prime = -params.beta_front * backward(&state.v) - params.mu_front * backward(&state.w);
    let warning = (h_prime < -NEGATIVE_TOL).then_some(Warning::NegativeSpeed { t: state.t, h_prime });
    (h_prime, warning)
}

/// Reaction terms at one node.
pub fn reaction(params: &ModelParams, s: f64, e: f64, i: f64) -> (f64, f64, f64) {
    let inc = params.alpha * i * s;
    (
        params.a - inc - params.mu1 * s + params.r2 * i + params.r1 * e,
        (1.0 - params.p) * inc - (params.beta1 + params.r1 + params.mu2) * e,
        params.p * inc + params.beta1 * e - (params.r2 + params.mu3) * i,
    )
}

/// Result of one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub state: SimState,
    /// Mass removed by positivity clipping (weighted by `r^(n-1) dr`).
    pub clipped_mass: f64,
    pub warnings: Vec<Warning>,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

/// Advances one step of length `config.dt`.
pub fn step(
    state: &SimState,
    params: &ModelParams,
    grid: &Grid,
    config: &SolverConfig,
) -> Result<StepReport> {
    step_with_dt(state, params, grid, config, config.dt)
}

fn step_with_dt(
    state: &SimState,
    params: &ModelParams,
    grid: &Grid,
    config: &SolverConfig,
    dt: f64,
) -> Result<StepReport> {
    let lipschitz = (params.alpha * sup(&state.w) + params.mu1)
        .max(params.beta1 + params.r1 + params.mu2)
        .max(params.r2 + params.mu3)
        + params.alpha * sup(&state.u);
    if dt * lipschitz >= 1.0 {
        return Err(Error::StepRejected {
            t: state.t,
            reason: format!("dt * reaction Lipschitz bound = {} >= 1", dt * lipschitz),
        });
    }

    let mut warnings = Vec::new();
    let (h_prime, warn) = stefan_speed(state, grid, params);
    warnings.extend(warn);

    let mut report = advance_fields(state, params, grid, config, dt, h_prime)?;
    if config.front_corrector {
        let (h_prime_new, _) = stefan_speed(&report.state, grid, params);
        let averaged = 0.5 * (h_prime + h_prime_new);
        report = advance_fields(state, params, grid, config, dt, averaged)?;
    }
    let (h_prime_next, _) = stefan_speed(&report.state, grid, params);
    report.state.h_prime = h_prime_next;
    report.warnings.splice(0..0, warnings);
    Ok(report)
}

/// Moves the front with speed `h_prime` and solves for the new fields.
fn advance_fields(
    state: &SimState,
    params: &ModelParams,
    grid: &Grid,
    config: &SolverConfig,
    dt: f64,
    h_prime: f64,
) -> Result<StepReport> {
    let t_new = state.t + dt;
    let h_new = state.h + dt * h_prime;
    if !(h_new.is_finite() && h_new > 0.0 && h_new < grid.r_max) {
        return Err(Error::StepRejected {
            t: state.t,
            reason: format!("front moved to {h_new}, outside (0, r_max = {})", grid.r_max),
        });
    }
    let m = grid.front();
    let theta = config.theta;

    // Reaction at the old state.
    let n_comp = grid.composite_len();
    let mut f_s = vec![0.0; n_comp];
    let mut f_e = vec![0.0; m];
    let mut f_i = vec![0.0; m];
    for k in 0..n_comp {
        let (e, i) = if k < m { (state.v[k], state.w[k]) } else { (0.0, 0.0) };
        let (fs, fe, fi) = reaction(params, state.u[k], e, i);
        f_s[k] = fs;
        if k < m {
            f_e[k] = fe;
            f_i[k] = fi;
        }
    }

    let r_new = grid.composite_radii(h_new);
    let vel_new = grid.composite_velocities(h_new, h_prime);
    let r_old = grid.composite_radii(state.h);
    let vel_old = grid.composite_velocities(state.h, h_prime);
    let n = params.dim_n;

    let solve_field = |values: &[f64],
                       forcing: &[f64],
                       d: f64,
                       end: FarEnd,
                       span: usize|
     -> Option<Vec<f64>> {
        let nodes = match end {
            FarEnd::Dirichlet => span + 1,
            FarEnd::Neumann => span,
        };
        let implicit = assemble(&r_new[..nodes], &vel_new[..nodes], d, n, end);
        let mut rhs: Vec<f64> = values[..span]
            .iter()
            .zip(forcing)
            .map(|(x, f)| x + dt * f)
            .collect();
        if theta < 1.0 {
            let explicit = assemble(&r_old[..nodes], &vel_old[..nodes], d, n, end);
            for (acc, lx) in rhs.iter_mut().zip(explicit.apply(&values[..span])) {
                *acc += (1.0 - theta) * dt * lx;
            }
        }
        let mut system = implicit;
        for k in 0..span {
            system.sub[k] *= -theta * dt;
            system.sup[k] *= -theta * dt;
            system.diag[k] = 1.0 - theta * dt * system.diag[k];
        }
        system.solve(&rhs)
    };

    let reject = |what: &str| Error::StepRejected {
        t: state.t,
        reason: format!("singular {what} system"),
    };
    let mut u = solve_field(&state.u, &f_s, params.d1, FarEnd::Neumann, n_comp)
        .ok_or_else(|| reject("S"))?;
    let mut v = solve_field(&state.v, &f_e, params.d2, FarEnd::Dirichlet, m)
        .ok_or_else(|| reject("E"))?;
    let mut w = solve_field(&state.w, &f_i, params.d3, FarEnd::Dirichlet, m)
        .ok_or_else(|| reject("I"))?;
    v.push(0.0);
    w.push(0.0);

    for (name, field) in [("S", &u), ("E", &v), ("I", &w)] {
        if field.iter().any(|x| !x.is_finite()) {
            return Err(Error::StepRejected {
                t: state.t,
                reason: format!("non-finite {name} value"),
            });
        }
    }

    let weights = radial_weights(&r_new, n);
    let mut clipped_mass = 0.0;
    for (name, field) in [("S", &mut u), ("E", &mut v), ("I", &mut w)] {
        if config.positivity_clip {
            for (x, wgt) in field.iter_mut().zip(&weights) {
                if *x < 0.0 {
                    clipped_mass += -*x * wgt;
                    *x = 0.0;
                }
            }
        } else if let Some((node, &value)) = field
            .iter()
            .enumerate()
            .find(|(_, &x)| x < -config.positivity_tolerance)
        {
            return Err(Error::Positivity {
                field: name,
                node,
                value,
                t: t_new,
            });
        }
    }

    Ok(StepReport {
        state: SimState {
            t: t_new,
            h: h_new,
            h_prime,
            u,
            v,
            w,
        },
        clipped_mass,
        warnings: Vec::new(),
    })
}

/// Trapezoid weights of `int r^(n-1) f dr` on the nodes `r`.
fn radial_weights(r: &[f64], dim_n: u32) -> Vec<f64> {
    let mut wts = vec![0.0; r.len()];
    for k in 0..r.len().saturating_sub(1) {
        let half = 0.5 * (r[k + 1] - r[k]);
        wts[k] += half * r[k].powi(dim_n as i32 - 1);
        wts[k + 1] += half * r[k + 1].powi(dim_n as i32 - 1);
    }
    wts
}

/// `int_0^h r^(n-1) (E + I) dr` by the trapezoid rule.
pub fn weighted_infected_mass(state: &SimState, grid: &Grid, dim_n: u32) -> f64 {
    let r = grid.inner_radii(state.h);
    radial_weights(&r, dim_n)
        .iter()
        .zip(state.v.iter().zip(&state.w))
        .map(|(wt, (e, i))| wt * (e + i))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorKind {
    /// `sup(S + E + I)` above `max(initial sup, A/b) (1 + tol)`.
    UniformBound,
    /// Front speed below `-NEGATIVE_TOL`.
    NegativeSpeed,
    /// A field value below `-NEGATIVE_TOL`.
    NegativeField,
    /// `h` decreased.
    FrontRetreat,
    /// `r_max < 4 h` at the end of the run.
    FarFieldTooClose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorEvent {
    pub t: f64,
    pub kind: MonitorKind,
    pub value: f64,
    pub bound: f64,
}

/// Stored fields at one time, on the composite mesh (E, I padded with zeros).
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub h: f64,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub e: Vec<f64>,
    pub i: Vec<f64>,
}

impl Snapshot {
    fn capture(state: &SimState, grid: &Grid) -> Self {
        let n = grid.composite_len();
        let pad = |f: &[f64]| {
            let mut out = f.to_vec();
            out.resize(n, 0.0);
            out
        };
        Self {
            t: state.t,
            h: state.h,
            r: grid.composite_radii(state.h),
            s: state.u.clone(),
            e: pad(&state.v),
            i: pad(&state.w),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub h: Vec<f64>,
    pub h_prime: Vec<f64>,
    pub sup_s: Vec<f64>,
    pub sup_e: Vec<f64>,
    pub sup_i: Vec<f64>,
    pub total_ei_weighted: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub monitor_events: Vec<MonitorEvent>,
    pub clipped_mass: f64,
    pub warnings: Vec<Warning>,
    /// State at the end of the run.
    pub final_state: Option<SimState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn record(&mut self, state: &SimState, grid: &Grid, dim_n: u32) {
        self.times.push(state.t);
        self.h.push(state.h);
        self.h_prime.push(state.h_prime);
        self.sup_s.push(sup(&state.u));
        self.sup_e.push(sup(&state.v));
        self.sup_i.push(sup(&state.w));
        self.total_ei_weighted
            .push(weighted_infected_mass(state, grid, dim_n));
    }
}

struct Monitors {
    sum_bound: f64,
    last_h: f64,
}

impl Monitors {
    fn new(params: &ModelParams, initial: &SimState, tolerance: f64) -> Self {
        let sup_sum = sup_total(initial);
        let base = sup_sum.max(params.a / params.min_death_rate());
        Self {
            sum_bound: base * (1.0 + tolerance),
            last_h: initial.h,
        }
    }

    fn check(&mut self, state: &SimState, events: &mut Vec<MonitorEvent>) {
        let t = state.t;
        let total = sup_total(state);
        if total > self.sum_bound {
            events.push(MonitorEvent {
                t,
                kind: MonitorKind::UniformBound,
                value: total,
                bound: self.sum_bound,
            });
        }
        if state.h_prime < -NEGATIVE_TOL {
            events.push(MonitorEvent {
                t,
                kind: MonitorKind::NegativeSpeed,
                value: state.h_prime,
                bound: -NEGATIVE_TOL,
            });
        }
        let min_field = state
            .u
            .iter()
            .chain(&state.v)
            .chain(&state.w)
            .fold(f64::INFINITY, |acc, &x| acc.min(x));
        if min_field < -NEGATIVE_TOL {
            events.push(MonitorEvent {
                t,
                kind: MonitorKind::NegativeField,
                value: min_field,
                bound: -NEGATIVE_TOL,
            });
        }
        if state.h < self.last_h - NEGATIVE_TOL {
            events.push(MonitorEvent {
                t,
                kind: MonitorKind::FrontRetreat,
                value: state.h,
                bound: self.last_h,
            });
        }
        self.last_h = state.h;
    }
}

fn sup_total(state: &SimState) -> f64 {
    state
        .u
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            s + state.v.get(k).copied().unwrap_or(0.0) + state.w.get(k).copied().unwrap_or(0.0)
        })
        .fold(0.0f64, f64::max)
}

/// Integrates from the initial data to `config.t_end`.
pub fn run(
    params: &ModelParams,
    initial: &InitialData,
    grid: &Grid,
    config: &SolverConfig,
) -> Result<Trajectory> {
    let checked = validate_params(*params)?;
    config.validate()?;
    initial.validate(grid)?;

    let mut traj = Trajectory {
        warnings: checked.warnings,
        ..Default::default()
    };
    let mut state = SimState::from_initial(initial);
    state.h_prime = stefan_speed(&state, grid, params).0;
    let mut monitors = Monitors::new(params, &state, config.monitor_tolerance);
    monitors.check(&state, &mut traj.monitor_events);
    traj.record(&state, grid, params.dim_n);
    if config.snapshot_every > 0 {
        traj.snapshots.push(Snapshot::capture(&state, grid));
    }

    let t_end = config.t_end;
    let eps = 1e-9 * config.dt;
    let mut steps = 0usize;
    let mut negative_speed_reported = false;
    let t0 = state.t;
    while state.t < t_end - eps {
        // indexed times: no round-off drift, and the last step lands on t_end
        let target = (t0 + (steps + 1) as f64 * config.dt).min(t_end);
        let target = if t_end - target <= eps { t_end } else { target };
        let report = step_with_dt(&state, params, grid, config, target - state.t)?;
        state = report.state;
        state.t = target;
        traj.clipped_mass += report.clipped_mass;
        for w in report.warnings {
            if matches!(w, Warning::NegativeSpeed { .. }) {
                if negative_speed_reported {
                    continue;
                }
                negative_speed_reported = true;
                log::warn!("{w}");
            }
            traj.warnings.push(w);
        }
        steps += 1;
        let last = state.t >= t_end - eps;
        if steps.is_multiple_of(config.record_every) || last {
            monitors.check(&state, &mut traj.monitor_events);
            traj.record(&state, grid, params.dim_n);
        }
        if config.snapshot_every > 0 && (steps.is_multiple_of(config.snapshot_every) || last) {
            traj.snapshots.push(Snapshot::capture(&state, grid));
        }
    }

    if grid.r_max < 4.0 * state.h {
        traj.monitor_events.push(MonitorEvent {
            t: state.t,
            kind: MonitorKind::FarFieldTooClose,
            value: grid.r_max,
            bound: 4.0 * state.h,
        });
    }
    traj.final_state = Some(state);
    Ok(traj)
}
