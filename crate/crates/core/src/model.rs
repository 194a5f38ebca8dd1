//! Parameters, meshes and state of the free-boundary SEIS model.
//!
//! Fields live on two node sets that share the front node:
//!
//! * the *inner* mesh, `m_inner` uniformly spaced nodes in the front-fixed
//!   coordinate `s in [0, h0]`. Node `m_inner - 1` sits on the front `r = h(t)`.
//!   `E` and `I` live here and vanish on the front node.
//! * the *outer* mesh, `m_outer` uniformly spaced nodes covering `[h(t), r_max]`
//!   in physical radius. Its first node is the front node.
//!
//! `S` lives on the composite mesh (inner followed by outer minus the shared
//! node), `m_inner + m_outer - 1` values in total.

use std::f64::consts::PI;

use crate::error::{Error, Result, Warning};

/// Relative tolerance for the equal-diffusion test.
pub const EQUAL_DIFFUSION_RTOL: f64 = 1e-12;

/// Epidemiological and diffusion constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Recruitment rate `A`.
    pub a: f64,
    /// Incidence-of-meeting rate.
    pub alpha: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    /// Treatment cure rate of latent disease.
    pub r1: f64,
    /// Treatment cure rate of active disease.
    pub r2: f64,
    /// Breakdown rate latent -> active.
    pub beta1: f64,
    /// Fraction of new infections that become active immediately.
    pub p: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    /// Front-expansion weight of the `E` flux.
    pub beta_front: f64,
    /// Front-expansion weight of the `I` flux.
    pub mu_front: f64,
    /// Spatial dimension of the radial Laplacian.
    pub dim_n: u32,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            alpha: 1.0,
            mu1: 1.0,
            mu2: 1.0,
            mu3: 1.0,
            r1: 1.0,
            r2: 1.0,
            beta1: 1.0,
            p: 0.5,
            d1: 1.0,
            d2: 1.0,
            d3: 1.0,
            beta_front: 1.0,
            mu_front: 1.0,
            dim_n: 1,
        }
    }
}

impl ModelParams {
    /// Disease-free level of `S`.
    pub fn dfe_s(&self) -> f64 {
        self.a / self.mu1
    }

    pub fn min_death_rate(&self) -> f64 {
        self.mu1.min(self.mu2).min(self.mu3)
    }

    pub fn max_death_rate(&self) -> f64 {
        self.mu1.max(self.mu2).max(self.mu3)
    }

    pub fn equal_diffusion(&self) -> bool {
        let close = |x: f64, y: f64| (x - y).abs() <= EQUAL_DIFFUSION_RTOL * x.abs().max(y.abs());
        close(self.d1, self.d2) && close(self.d2, self.d3) && close(self.d1, self.d3)
    }

    /// The common diffusivity `d`. Falls back to `d3` when the diffusivities differ.
    pub fn common_diffusion(&self) -> f64 {
        self.d3
    }
}

/// Parameters that passed validation, with any non-fatal findings.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckedParams {
    pub params: ModelParams,
    pub warnings: Vec<Warning>,
}

pub fn validate_params(params: ModelParams) -> Result<CheckedParams> {
    let positive: [(&'static str, f64); 13] = [
        ("A", params.a),
        ("alpha", params.alpha),
        ("mu1", params.mu1),
        ("mu2", params.mu2),
        ("mu3", params.mu3),
        ("r1", params.r1),
        ("r2", params.r2),
        ("beta1", params.beta1),
        ("d1", params.d1),
        ("d2", params.d2),
        ("d3", params.d3),
        ("beta_front", params.beta_front),
        ("mu_front", params.mu_front),
    ];
    for (field, value) in positive {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::ParamDomain {
                field,
                reason: format!("must be finite and > 0, got {value}"),
            });
        }
    }
    if !(0.0..=1.0).contains(&params.p) {
        return Err(Error::ParamDomain {
            field: "p",
            reason: format!("must lie in [0, 1], got {}", params.p),
        });
    }
    if params.dim_n < 1 {
        return Err(Error::ParamDomain {
            field: "dim_n",
            reason: "must be >= 1".into(),
        });
    }
    let mut warnings = Vec::new();
    if !params.equal_diffusion() {
        warnings.push(Warning::UnequalDiffusion {
            d1: params.d1,
            d2: params.d2,
            d3: params.d3,
        });
    }
    Ok(CheckedParams { params, warnings })
}

/// Mesh layout. See the module docs for the node convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub h0: f64,
    pub m_inner: usize,
    pub r_max: f64,
    pub m_outer: usize,
}

impl Grid {
    pub const MIN_INNER: usize = 16;
    pub const MIN_OUTER: usize = 2;

    pub fn new(h0: f64, m_inner: usize, m_outer: usize, r_max: f64) -> Result<Self> {
        if !(h0.is_finite() && h0 > 0.0) {
            return Err(Error::Grid(format!("h0 must be > 0, got {h0}")));
        }
        if m_inner < Self::MIN_INNER {
            return Err(Error::Grid(format!(
                "m_inner must be >= {}, got {m_inner}",
                Self::MIN_INNER
            )));
        }
        if m_outer < Self::MIN_OUTER {
            return Err(Error::Grid(format!(
                "m_outer must be >= {}, got {m_outer}",
                Self::MIN_OUTER
            )));
        }
        if !(r_max.is_finite() && r_max >= 4.0 * h0) {
            return Err(Error::Grid(format!(
                "r_max must be >= 4*h0 = {}, got {r_max}",
                4.0 * h0
            )));
        }
        Ok(Self {
            h0,
            m_inner,
            r_max,
            m_outer,
        })
    }

    /// Spacing of the inner mesh in the front-fixed coordinate.
    pub fn ds(&self) -> f64 {
        self.h0 / (self.m_inner - 1) as f64
    }

    /// Outer spacing at the initial front position.
    pub fn dr_outer(&self) -> f64 {
        self.dr_outer_at(self.h0)
    }

    pub fn dr_outer_at(&self, h: f64) -> f64 {
        (self.r_max - h) / (self.m_outer - 1) as f64
    }

    /// Index of the front node.
    pub fn front(&self) -> usize {
        self.m_inner - 1
    }

    pub fn composite_len(&self) -> usize {
        self.m_inner + self.m_outer - 1
    }

    /// Front-fixed coordinates of the inner nodes.
    pub fn s_nodes(&self) -> Vec<f64> {
        let ds = self.ds();
        (0..self.m_inner).map(|i| i as f64 * ds).collect()
    }

    /// Physical radii of the inner nodes when the front sits at `h`.
    pub fn inner_radii(&self, h: f64) -> Vec<f64> {
        let scale = h / self.h0;
        let mut r: Vec<f64> = self.s_nodes().into_iter().map(|s| s * scale).collect();
        r[self.front()] = h;
        r
    }

    /// Physical radii of every composite node when the front sits at `h`.
    pub fn composite_radii(&self, h: f64) -> Vec<f64> {
        let mut r = self.inner_radii(h);
        let dr = self.dr_outer_at(h);
        r.extend((1..self.m_outer).map(|j| h + j as f64 * dr));
        r[self.composite_len() - 1] = self.r_max;
        r
    }

    /// Node velocities `dr/dt` of the composite mesh for front speed `h_prime`.
    pub fn composite_velocities(&self, h: f64, h_prime: f64) -> Vec<f64> {
        let mut vel: Vec<f64> = self
            .inner_radii(h)
            .into_iter()
            .map(|r| r * h_prime / h)
            .collect();
        let last = (self.m_outer - 1) as f64;
        vel.extend((1..self.m_outer).map(|j| h_prime * (1.0 - j as f64 / last)));
        vel
    }
}

/// Amplitudes of the default cos^2 initial bumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplitudes {
    pub c_e: f64,
    pub c_i: f64,
}

impl Default for Amplitudes {
    fn default() -> Self {
        Self { c_e: 0.0, c_i: 1.0 }
    }
}

/// Initial data sampled on the grid at `h = h0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub h0: f64,
    /// `S0` on the composite mesh.
    pub s0: Vec<f64>,
    /// `E0` on the inner mesh.
    pub e0: Vec<f64>,
    /// `I0` on the inner mesh.
    pub i0: Vec<f64>,
}

impl InitialData {
    /// Checks the compatibility conditions: `E0 = I0 = 0` on the front,
    /// `I0 > 0` inside, `S0 >= 0`, everything finite.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if (self.h0 - grid.h0).abs() > 1e-12 * grid.h0 {
            return Err(Error::Grid(format!(
                "initial data built for h0 = {} but grid has h0 = {}",
                self.h0, grid.h0
            )));
        }
        if self.s0.len() != grid.composite_len()
            || self.e0.len() != grid.m_inner
            || self.i0.len() != grid.m_inner
        {
            return Err(Error::Grid("initial profile lengths do not match grid".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(finite(&self.s0) && finite(&self.e0) && finite(&self.i0)) {
            return Err(Error::Amplitude("non-finite initial value".into()));
        }
        if self.s0.iter().any(|&x| x < 0.0) {
            return Err(Error::Amplitude("S0 must be >= 0".into()));
        }
        if self.e0.iter().any(|&x| x < 0.0) {
            return Err(Error::Amplitude("E0 must be >= 0".into()));
        }
        let front = grid.front();
        if self.e0[front] != 0.0 || self.i0[front] != 0.0 {
            return Err(Error::Amplitude("E0 and I0 must vanish at r = h0".into()));
        }
        if self.i0[..front].iter().any(|&x| x <= 0.0) {
            return Err(Error::Amplitude("I0 must be > 0 on [0, h0)".into()));
        }
        Ok(())
    }
}

/// `c * cos^2(pi r / (2 h0))` inside the front, zero outside.
pub fn cos2_bump(r: f64, h0: f64, c: f64) -> f64 {
    if r >= h0 {
        0.0
    } else {
        let x = (PI * r / (2.0 * h0)).cos();
        c * x * x
    }
}

pub fn default_initial_profiles(
    params: &ModelParams,
    grid: &Grid,
    amplitudes: Amplitudes,
) -> Result<InitialData> {
    if !(amplitudes.c_i.is_finite() && amplitudes.c_i > 0.0) {
        return Err(Error::Amplitude(format!(
            "c_I must be > 0, got {}",
            amplitudes.c_i
        )));
    }
    if !(amplitudes.c_e.is_finite() && amplitudes.c_e >= 0.0) {
        return Err(Error::Amplitude(format!(
            "c_E must be >= 0, got {}",
            amplitudes.c_e
        )));
    }
    let h0 = grid.h0;
    let r = grid.inner_radii(h0);
    let e0: Vec<f64> = r.iter().map(|&r| cos2_bump(r, h0, amplitudes.c_e)).collect();
    let i0: Vec<f64> = r.iter().map(|&r| cos2_bump(r, h0, amplitudes.c_i)).collect();
    let s0 = vec![params.dfe_s(); grid.composite_len()];
    Ok(InitialData { h0, s0, e0, i0 })
}

/// Solution state at one instant, in front-fixed coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub h: f64,
    pub h_prime: f64,
    /// `S` on the composite mesh.
    pub u: Vec<f64>,
    /// `E` on the inner mesh.
    pub v: Vec<f64>,
    /// `I` on the inner mesh.
    pub w: Vec<f64>,
}

impl SimState {
    pub fn from_initial(initial: &InitialData) -> Self {
        Self {
            t: 0.0,
            h: initial.h0,
            h_prime: 0.0,
            u: initial.s0.clone(),
            v: initial.e0.clone(),
            w: initial.i0.clone(),
        }
    }
}
