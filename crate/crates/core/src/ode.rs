//! Space-free SEIS baseline integrated with classic RK4.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::solver::reaction;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeState {
    pub t: f64,
    pub s: f64,
    pub e: f64,
    pub i: f64,
}

impl OdeState {
    pub fn new(s: f64, e: f64, i: f64) -> Self {
        Self { t: 0.0, s, e, i }
    }

    pub fn total(&self) -> f64 {
        self.s + self.e + self.i
    }
}

/// Right-hand side `(S', E', I')`.
pub fn ode_rhs(state: &OdeState, params: &ModelParams) -> (f64, f64, f64) {
    reaction(params, state.s, state.e, state.i)
}

/// RK4 from `state0.t` to `t_end`; the last step is shortened to land on
/// `t_end`. Returns every step including the start.
pub fn ode_run(state0: OdeState, params: &ModelParams, dt: f64, t_end: f64) -> Result<Vec<OdeState>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::ParamDomain {
            field: "dt",
            reason: format!("must be > 0, got {dt}"),
        });
    }
    let mut out = vec![state0];
    let mut y = state0;
    let eps = 1e-9 * dt;
    let mut k = 0u64;
    while y.t < t_end - eps {
        k += 1;
        // times are indexed, not accumulated, so the grid does not drift
        let next = (state0.t + k as f64 * dt).min(t_end);
        let next = if t_end - next <= eps { t_end } else { next };
        y = rk4_step(&y, params, next - y.t);
        y.t = next;
        if !(y.s.is_finite() && y.e.is_finite() && y.i.is_finite()) {
            return Err(Error::Blowup(y.t));
        }
        out.push(y);
    }
    Ok(out)
}

fn rk4_step(y: &OdeState, params: &ModelParams, h: f64) -> OdeState {
    let at = |base: &OdeState, k: (f64, f64, f64), c: f64| OdeState {
        t: base.t + c * h,
        s: base.s + c * h * k.0,
        e: base.e + c * h * k.1,
        i: base.i + c * h * k.2,
    };
    let k1 = ode_rhs(y, params);
    let k2 = ode_rhs(&at(y, k1, 0.5), params);
    let k3 = ode_rhs(&at(y, k2, 0.5), params);
    let k4 = ode_rhs(&at(y, k3, 1.0), params);
    let comb = |a: f64, b: f64, c: f64, d: f64| h / 6.0 * (a + 2.0 * b + 2.0 * c + d);
    OdeState {
        t: y.t + h,
        s: y.s + comb(k1.0, k2.0, k3.0, k4.0),
        e: y.e + comb(k1.1, k2.1, k3.1, k4.1),
        i: y.i + comb(k1.2, k2.2, k3.2, k4.2),
    }
}
