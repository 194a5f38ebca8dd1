//! Long-time behaviour of the moving-front solver against the threshold
//! predictions, plus invariants over random parameters.

use proptest::prelude::*;
use seis_core::solver::MonitorKind;
use seis_core::thresholds::{classify, critical_radius, threshold_report, ClassifyTolerances, Regime};
use seis_core::{default_initial_profiles, run, Amplitudes, Grid, ModelParams, SolverConfig, Trajectory};

fn simulate(params: &ModelParams, grid: &Grid, dt: f64, t_end: f64) -> Trajectory {
    let init = default_initial_profiles(params, grid, Amplitudes { c_e: 0.5, c_i: 1.0 }).unwrap();
    let config = SolverConfig {
        dt,
        t_end,
        record_every: 5,
        ..Default::default()
    };
    run(params, &init, grid, &config).unwrap()
}

fn subcritical() -> ModelParams {
    ModelParams {
        alpha: 0.5,
        beta1: 0.5,
        beta_front: 0.5,
        mu_front: 0.5,
        ..Default::default()
    }
}

fn supercritical() -> ModelParams {
    ModelParams {
        a: 4.0,
        mu1: 0.5,
        mu2: 0.5,
        mu3: 0.5,
        r1: 0.2,
        r2: 0.2,
        p: 0.8,
        beta_front: 0.5,
        mu_front: 0.5,
        ..Default::default()
    }
}

#[test]
fn subcritical_front_freezes_and_prediction_agrees() {
    let p = subcritical();
    let grid = Grid::new(1.0, 128, 32, 8.0).unwrap();
    let traj = simulate(&p, &grid, 0.01, 30.0);
    assert_eq!(classify(&traj, &ClassifyTolerances::default()), Regime::Vanishing);
    let init = default_initial_profiles(&p, &grid, Amplitudes { c_e: 0.5, c_i: 1.0 }).unwrap();
    let report = threshold_report(&p, &init).unwrap();
    assert_eq!(report.predicted_regime, Regime::Vanishing);
    // the front stops well short of where it would need to go to spread
    let h_end = *traj.h.last().unwrap();
    assert!(h_end < 1.5, "h = {h_end}");
    assert!(traj.h_prime.last().unwrap().abs() < 1e-8);
}

#[test]
fn supercritical_front_passes_critical_radius_and_keeps_moving() {
    let p = supercritical();
    let rc = critical_radius(&p);
    let h0 = 2.0 * rc;
    let grid = Grid::new(h0, 128, 200, 400.0).unwrap();
    let traj = simulate(&p, &grid, 0.01, 30.0);
    let h_end = *traj.h.last().unwrap();
    assert!(h_end > 10.0 * rc, "h = {h_end}, critical radius {rc}");
    assert_eq!(classify(&traj, &ClassifyTolerances::default()), Regime::Spreading);
    // asymptotically linear spread: speed settles to a positive constant
    let n = traj.h_prime.len();
    let (a, b) = (traj.h_prime[3 * n / 4], traj.h_prime[n - 1]);
    assert!(b > 0.1 && (a - b).abs() < 0.05 * b, "speeds {a} {b}");
    assert!(!traj.monitor_events.iter().any(|e| e.kind == MonitorKind::FarFieldTooClose));
}

#[test]
fn vanishing_below_critical_radius_never_crosses_it() {
    // supercritical reaction, but a small patch and a slow front
    let p = ModelParams {
        beta_front: 0.05,
        mu_front: 0.05,
        ..supercritical()
    };
    let rc = critical_radius(&p);
    let h0 = 0.5 * rc;
    let grid = Grid::new(h0, 128, 64, 16.0 * h0).unwrap();
    let traj = simulate(&p, &grid, 0.002, 30.0);
    assert_eq!(classify(&traj, &ClassifyTolerances::default()), Regime::Vanishing);
    let h_max = traj.h.iter().cloned().fold(0.0, f64::max);
    assert!(h_max <= rc, "h reached {h_max}, critical radius {rc}");
}

#[test]
fn front_position_converges_under_refinement() {
    let p = supercritical();
    let h_at = |m: usize| {
        let grid = Grid::new(1.0, m + 1, m / 2 + 1, 8.0).unwrap();
        let ds = 1.0 / m as f64;
        *simulate(&p, &grid, 0.5 * ds * ds, 0.5).h.last().unwrap()
    };
    let (a, b, c) = (h_at(32), h_at(64), h_at(128));
    let (d1, d2) = ((a - b).abs(), (b - c).abs());
    assert!(d2 < d1 / 2.5, "differences {d1:e} {d2:e}");
}

#[test]
fn time_step_halving_converges() {
    let p = subcritical();
    let grid = Grid::new(1.0, 64, 32, 8.0).unwrap();
    let h = |dt: f64| *simulate(&p, &grid, dt, 2.0).h.last().unwrap();
    let (a, b, c) = (h(0.02), h(0.01), h(0.005));
    let (d1, d2) = ((a - b).abs(), (b - c).abs());
    // first order in time
    assert!(d2 < 0.6 * d1 && d2 > 0.4 * d1, "differences {d1:e} {d2:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn front_is_monotone_and_fields_stay_nonnegative(
        alpha in 0.1..3.0f64,
        mu in 0.3..2.0f64,
        p_frac in 0.0..1.0f64,
        front in 0.0..2.0f64,
        h0 in 0.5..2.0f64,
    ) {
        let params = ModelParams {
            alpha,
            mu1: mu,
            mu2: mu,
            mu3: mu,
            p: p_frac,
            beta_front: front,
            mu_front: front,
            ..Default::default()
        };
        let grid = Grid::new(h0, 48, 24, 20.0 * h0).unwrap();
        let traj = simulate(&params, &grid, 0.005, 3.0);
        prop_assert!(traj.h.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(traj.h_prime.iter().all(|&v| v >= -1e-10));
        let bad: Vec<_> = traj
            .monitor_events
            .iter()
            .filter(|e| e.kind != MonitorKind::FarFieldTooClose)
            .collect();
        prop_assert!(bad.is_empty(), "{:?}", bad);
        let state = traj.final_state.unwrap();
        prop_assert!(state.u.iter().chain(&state.v).chain(&state.w).all(|&x| x >= -1e-10));
    }
}
