//! Coordinate changes that pin the moving front.
//!
//! Two maps are provided. The cutoff straightening `r = s + xi(s) (h - h_ref)`
//! only moves an annulus around the reference front and is a diffeomorphism
//! while `|h - h_ref| <= h_ref / 8`. The proportional map `r = s h / h_ref`
//! is valid for every `h > 0` and is the one the time stepper uses.

use crate::error::{Error, Result};

/// Fraction of the transition band used by each smooth ramp of `-xi'`.
const RAMP_FRACTION: f64 = 0.25;

/// 7th-order smoothstep: `P(0) = 0`, `P(1) = 1`, first three derivatives
/// vanish at both ends.
fn smoothstep7(y: f64) -> f64 {
    let y2 = y * y;
    y2 * y2 * (35.0 - 84.0 * y + 70.0 * y2 - 20.0 * y2 * y)
}

fn smoothstep7_d1(y: f64) -> f64 {
    let y3 = y * y * y;
    y3 * (140.0 - 420.0 * y + 420.0 * y * y - 140.0 * y3)
}

/// Antiderivative of [`smoothstep7`] with value 0 at 0 and 1/2 at 1.
fn smoothstep7_int(y: f64) -> f64 {
    let y5 = y.powi(5);
    y5 * (7.0 - 14.0 * y + 10.0 * y * y - 2.5 * y * y * y)
}

/// Normalized slope profile `g` on `[0, 1]`: a plateau of height
/// `1 / (1 - a)` reached through smoothstep ramps of width `a`.
/// `g`, `g'`, `g''` vanish at both ends and `int_0^1 g = 1`.
fn ramp_profile(x: f64) -> (f64, f64, f64) {
    let a = RAMP_FRACTION;
    let c = 1.0 / (1.0 - a);
    let x = x.clamp(0.0, 1.0);
    if x <= a {
        let y = x / a;
        // G(x) = c a Q(y)
        (c * a * smoothstep7_int(y), c * smoothstep7(y), c * smoothstep7_d1(y) / a)
    } else if x < 1.0 - a {
        (c * (0.5 * a + (x - a)), c, 0.0)
    } else {
        let (g_int, g, dg) = ramp_profile(1.0 - x);
        (1.0 - g_int, g, -dg)
    }
}

/// Smooth cutoff around the reference front.
///
/// Returns `(xi, xi', xi'')`. `xi = 1` on `|s - h_ref| < h_ref/8`, `xi = 0` on
/// `|s - h_ref| > h_ref/2`, monotone in between, `C^3`, and
/// `max |xi'| = (4/3) (8/3) / h_ref < 5 / h_ref`.
pub fn xi_cutoff(s: f64, h_ref: f64) -> Result<(f64, f64, f64)> {
    if !(h_ref.is_finite() && h_ref > 0.0) {
        return Err(Error::Domain(format!("h_ref must be > 0, got {h_ref}")));
    }
    let inner = h_ref / 8.0;
    let outer = h_ref / 2.0;
    let dist = (s - h_ref).abs();
    if dist <= inner {
        return Ok((1.0, 0.0, 0.0));
    }
    if dist >= outer {
        return Ok((0.0, 0.0, 0.0));
    }
    let width = outer - inner;
    let x = (dist - inner) / width;
    let dxds = (s - h_ref).signum() / width;
    let (g_int, g, dg) = ramp_profile(x);
    Ok((1.0 - g_int, -g * dxds, -dg * dxds * dxds))
}

/// Chain-rule coefficients of the cutoff straightening at one `(h, s)`.
///
/// With `u(s) = f(r(s))`:
/// `f_rr = X u_ss + Y u_s` and `Delta_r f = X Delta_s u + (Y + W) u_s`,
/// while `f_t = u_t - h' Z u_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StraighteningCoeffs {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

pub fn straightening_coeffs(h: f64, h_ref: f64, s: f64, dim_n: u32) -> Result<StraighteningCoeffs> {
    if !(h_ref.is_finite() && h_ref > 0.0) {
        return Err(Error::Domain(format!("h_ref must be > 0, got {h_ref}")));
    }
    let shift = h - h_ref;
    if shift.abs() > h_ref / 8.0 {
        return Err(Error::Diffeomorphism { h, h_ref });
    }
    let (xi, dxi, ddxi) = xi_cutoff(s, h_ref)?;
    let jac = 1.0 + dxi * shift;
    let x = 1.0 / (jac * jac);
    let y = -ddxi * shift / (jac * jac * jac);
    let z = xi / jac;
    let w = if dim_n > 1 && s > 0.0 {
        let r = s + xi * shift;
        (dim_n - 1) as f64 * x * (s * dxi - xi) * shift / (s * r)
    } else {
        0.0
    };
    Ok(StraighteningCoeffs { x, y, z, w })
}

/// Image of the front-fixed coordinate under the proportional map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontFixing {
    /// Physical radius.
    pub r: f64,
    /// `ds/dr`.
    pub ds_dr: f64,
    /// `(ds/dt) / h'`.
    pub ds_dt_over_hprime: f64,
}

/// `s = h_ref r / h`.
pub fn front_fixing_map(h: f64, h_ref: f64, s: f64) -> Result<FrontFixing> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Domain(format!("front position must be > 0, got {h}")));
    }
    if !(h_ref.is_finite() && h_ref > 0.0) {
        return Err(Error::Domain(format!("h_ref must be > 0, got {h_ref}")));
    }
    Ok(FrontFixing {
        r: s * h / h_ref,
        ds_dr: h_ref / h,
        ds_dt_over_hprime: -s / h,
    })
}

/// Inverse of [`front_fixing_map`]: physical radius to front-fixed coordinate.
pub fn front_fixing_inverse(h: f64, h_ref: f64, r: f64) -> f64 {
    h_ref * r / h
}
