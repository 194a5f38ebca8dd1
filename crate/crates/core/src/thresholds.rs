//! Reproductive numbers, the principal Dirichlet eigenvalue of the ball,
//! the critical spreading radius and regime classification.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{InitialData, ModelParams};
use crate::solver::Trajectory;

/// Which death rate enters the denominator of `R0_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum R0MaxForm {
    /// `alpha A / (mu1 min(r1 + mu2, r2 + mu3))`.
    #[default]
    SusceptibleDeath,
    /// Same with `min(mu1, mu2, mu3)` in place of `mu1`.
    AllDeathRates,
}

pub fn r0_max(params: &ModelParams) -> f64 {
    r0_max_with(params, R0MaxForm::SusceptibleDeath)
}

pub fn r0_max_with(params: &ModelParams, form: R0MaxForm) -> f64 {
    let mu = match form {
        R0MaxForm::SusceptibleDeath => params.mu1,
        R0MaxForm::AllDeathRates => params.min_death_rate(),
    };
    let recovery = (params.r1 + params.mu2).min(params.r2 + params.mu3);
    params.alpha * params.a / (mu * recovery)
}

pub fn r0_min(params: &ModelParams) -> f64 {
    let denom =
        params.max_death_rate() * (params.r1.max(params.r2) + params.mu2.max(params.mu3));
    params.alpha * params.a / denom
}

/// Principal eigenvalue of `-Delta` on the ball of radius `radius` with
/// Dirichlet data. Closed forms for `n = 1, 3`; otherwise a fine discrete
/// solve.
pub fn lambda1_ball(radius: f64, dim_n: u32) -> Result<f64> {
    check_radius(radius)?;
    match dim_n {
        1 => Ok((PI / (2.0 * radius)).powi(2)),
        3 => Ok((PI / radius).powi(2)),
        _ => {
            // Richardson on two meshes lifts the second-order discrete value.
            let coarse = lambda1_ball_discrete(radius, dim_n, 2000)?;
            let fine = lambda1_ball_discrete(radius, dim_n, 4000)?;
            Ok((4.0 * fine - coarse) / 3.0)
        }
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::Domain(format!("radius must be > 0, got {radius}")));
    }
    Ok(())
}

/// Cell volumes `int r^(n-1) dr` of the finite-volume cells around
/// `r_i = i * step`, `i < count` (cell 0 is the half cell at the center).
pub fn radial_cell_volumes(step: f64, count: usize, dim_n: u32) -> Vec<f64> {
    let n = dim_n as i32;
    (0..count)
        .map(|i| {
            let hi = (i as f64 + 0.5) * step;
            let lo = (i as f64 - 0.5).max(0.0) * step;
            (hi.powi(n) - lo.powi(n)) / dim_n as f64
        })
        .collect()
}

/// Face weights `r^(n-1)` at the midpoints `(i + 1/2) * step`.
pub fn radial_face_weights(step: f64, count: usize, dim_n: u32) -> Vec<f64> {
    (0..count)
        .map(|i| ((i as f64 + 0.5) * step).powi(dim_n as i32 - 1))
        .collect()
}

/// Symmetric tridiagonal `W^-1/2 K W^-1/2` of the finite-volume radial
/// Dirichlet Laplacian on `[0, radius]` with `nodes` intervals.
/// Returns `(diag, offdiag)`.
pub fn radial_dirichlet_operator(radius: f64, dim_n: u32, nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let m = nodes;
    let dr = radius / m as f64;
    let vol = radial_cell_volumes(dr, m, dim_n);
    let face = radial_face_weights(dr, m, dim_n);
    let diag: Vec<f64> = (0..m)
        .map(|i| {
            let left = if i == 0 { 0.0 } else { face[i - 1] };
            (left + face[i]) / (dr * dr) / vol[i] * dr
        })
        .collect();
    let off: Vec<f64> = (0..m - 1)
        .map(|i| -face[i] / dr / (vol[i] * vol[i + 1]).sqrt())
        .collect();
    (diag, off)
}

/// Number of eigenvalues below `x` of the symmetric tridiagonal `(d, e)`.
pub fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..d.len() {
        let coupling = if i == 0 { 0.0 } else { e[i - 1] * e[i - 1] };
        q = d[i] - x - if i == 0 { 0.0 } else { coupling / q };
        if q == 0.0 {
            q = f64::EPSILON * (d[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// `k`-th smallest eigenvalue (0-based) of a symmetric tridiagonal matrix by
/// Sturm-sequence bisection.
pub fn tridiagonal_eigenvalue(d: &[f64], e: &[f64], k: usize) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..d.len() {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + e.get(i).map_or(0.0, |x| x.abs());
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest eigenvalue of the discrete radial Dirichlet Laplacian.
pub fn lambda1_ball_discrete(radius: f64, dim_n: u32, nodes: usize) -> Result<f64> {
    check_radius(radius)?;
    if nodes < 2 {
        return Err(Error::Grid(format!("need at least 2 intervals, got {nodes}")));
    }
    let (d, e) = radial_dirichlet_operator(radius, dim_n, nodes);
    Ok(tridiagonal_eigenvalue(&d, &e, 0))
}

/// Net growth rate of infection at the disease-free state,
/// `p alpha A / mu1 - r2 - mu3`.
pub fn infection_growth_rate(params: &ModelParams) -> f64 {
    params.p * params.alpha * params.a / params.mu1 - params.r2 - params.mu3
}

/// Radius above which the growth rate beats diffusive loss,
/// `sqrt(d lambda1(1) / g)`; infinite when `g <= 0`.
pub fn critical_radius(params: &ModelParams) -> f64 {
    let g = infection_growth_rate(params);
    if g <= 0.0 {
        return f64::INFINITY;
    }
    let unit = lambda1_ball(1.0, params.dim_n).expect("unit radius is valid");
    (params.d3 * unit / g).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Vanishing,
    Spreading,
    Indeterminate,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Vanishing => "vanishing",
            Regime::Spreading => "spreading",
            Regime::Indeterminate => "indeterminate",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Relative thresholds used by [`classify`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyTolerances {
    /// Extinction when `sup E + sup I` falls below this times the initial `sup I`.
    pub extinct: f64,
    /// Frozen front when growth over the last half is below this times `h0`.
    pub front: f64,
    /// Persistence when `sup I` stays above this times the initial `sup I`.
    pub persist: f64,
}

impl Default for ClassifyTolerances {
    fn default() -> Self {
        Self {
            extinct: 1e-4,
            front: 0.02,
            persist: 1e-3,
        }
    }
}

/// Value of the series at time `t` by linear interpolation.
fn sample(times: &[f64], values: &[f64], t: f64) -> f64 {
    match times.iter().position(|&x| x >= t) {
        None => *values.last().unwrap(),
        Some(0) => values[0],
        Some(k) => {
            let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
            values[k - 1] + w * (values[k] - values[k - 1])
        }
    }
}

/// Classifies a completed trajectory.
pub fn classify(traj: &Trajectory, tol: &ClassifyTolerances) -> Regime {
    if traj.is_empty() {
        return Regime::Indeterminate;
    }
    let last = traj.len() - 1;
    let t0 = traj.times[0];
    let t_end = traj.times[last];
    let h0 = traj.h[0];
    let i0 = traj.sup_i[0];
    let h_end = traj.h[last];

    let infected_end = traj.sup_e[last] + traj.sup_i[last];
    let h_mid = sample(&traj.times, &traj.h, 0.5 * (t0 + t_end));
    if infected_end <= tol.extinct * i0 && h_end - h_mid <= tol.front * h0 {
        return Regime::Vanishing;
    }

    let quarter = t0 + 0.75 * (t_end - t0);
    let min_tail = traj
        .times
        .iter()
        .zip(&traj.sup_i)
        .filter(|(&t, _)| t >= quarter)
        .map(|(_, &x)| x)
        .fold(f64::INFINITY, f64::min);
    if h_end > 4.0 * h0 && min_tail > tol.persist * i0 {
        return Regime::Spreading;
    }
    Regime::Indeterminate
}

/// Regime predicted from the parameters and the initial radius alone.
pub fn predict_regime(params: &ModelParams, h0: f64) -> Regime {
    if r0_max(params) < 1.0 {
        Regime::Vanishing
    } else if r0_min(params) > 1.0 && h0 > critical_radius(params) {
        Regime::Spreading
    } else {
        Regime::Indeterminate
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

/// True when the data also satisfy the small-front/slow-front hypotheses
/// under which a competing sufficient condition asserts vanishing despite
/// `R0_min > 1`. Such runs are flagged, not reclassified.
pub fn in_contested_region(params: &ModelParams, initial: &InitialData) -> bool {
    if r0_min(params) <= 1.0 {
        return false;
    }
    let (s, e, i) = (sup(&initial.s0), sup(&initial.e0), sup(&initial.i0));
    let c = (s + e + i).max(params.a / params.max_death_rate());
    let k0 = params.alpha * c - params.r1.max(params.r2) - params.mu2.max(params.mu3);
    if k0 <= 0.0 {
        return false;
    }
    let d = params.d3;
    let m = 2.0 / 3.0 * (e + i);
    let small_front = initial.h0 <= (d / (16.0 * k0)).sqrt();
    let slow_front = m == 0.0 || params.mu_front.max(params.beta_front) <= 3.0 * d / (4.0 * m);
    small_front && slow_front
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdReport {
    pub r0_max: f64,
    pub r0_min: f64,
    pub lambda1_h0: f64,
    pub critical_radius: f64,
    pub spreading_radius_ok: bool,
    pub predicted_regime: Regime,
    pub contested: bool,
}

pub fn threshold_report(params: &ModelParams, initial: &InitialData) -> Result<ThresholdReport> {
    let critical = critical_radius(params);
    let contested = in_contested_region(params, initial);
    let predicted = predict_regime(params, initial.h0);
    if contested {
        log::info!(
            "parameters fall in the contested small-front region; keeping prediction `{predicted}`"
        );
    }
    Ok(ThresholdReport {
        r0_max: r0_max(params),
        r0_min: r0_min(params),
        lambda1_h0: lambda1_ball(initial.h0, params.dim_n)?,
        critical_radius: critical,
        spreading_radius_ok: initial.h0 > critical,
        predicted_regime: predicted,
        contested,
    })
}
