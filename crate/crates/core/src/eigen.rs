//! Linearisation of the `(E, I)` subsystem about the disease-free state and
//! its two-field radial eigenproblem.
//!
//! Fields live on `r_i = i * dr`, `i = 0..m`, with `r_m = h_inf` a Dirichlet
//! node. The radial Laplacian is discretised by finite volumes: cell volumes
//! `W_i = int r^(n-1)` around each node and face weights `r^(n-1)` at the
//! midpoints. Every operator is then a symmetric pencil `(A, M)` with a
//! diagonal mass matrix `M`, which we handle in the standard form
//! `M^-1/2 A M^-1/2`.
//!
//! Three pencils are used:
//! * energy: the quadratic form of the variational functional with mass
//!   `diag(W, W)`; its quotient (halved) is what [`rayleigh_minimize`] minimises;
//! * rate: `-D L'` with mass `D (x) W`, `D = diag(a22, a12)`, whose eigenvalues
//!   are the decay rates of the unsymmetrised linearisation `L'`;
//! * symmetrised: `D L'` with mass `diag(W, W)`, whose spectrum is
//!   non-positive below threshold.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::thresholds::{radial_cell_volumes, radial_face_weights};
use crate::tridiag::Tridiag;

/// Coefficients of the linearised `(E, I)` reaction at the disease-free state:
/// `E' = a11 E + a12 I`, `I' = a22 E + a21 I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizationMatrix {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

pub fn linearization_matrix(params: &ModelParams) -> LinearizationMatrix {
    let s = params.alpha * params.a / params.mu1;
    LinearizationMatrix {
        a11: -(params.beta1 + params.r1 + params.mu2),
        a12: (1.0 - params.p) * s,
        a21: params.p * s - (params.r2 + params.mu3),
        a22: params.beta1,
    }
}

impl LinearizationMatrix {
    /// `a11 a21 - a12 a22`; non-negative below threshold, where together with
    /// `a11 < 0` it makes the weighted reaction block negative semi-definite.
    pub fn sign_quantity(&self) -> f64 {
        self.a11 * self.a21 - self.a12 * self.a22
    }

    /// Eigenvalues of the reaction block, largest first. Real whenever
    /// `a12 a22 >= 0`.
    pub fn reaction_eigenvalues(&self) -> (f64, f64) {
        let half_trace = 0.5 * (self.a11 + self.a21);
        let disc = (0.25 * (self.a11 - self.a21).powi(2) + self.a12 * self.a22).max(0.0);
        (half_trace + disc.sqrt(), half_trace - disc.sqrt())
    }

    fn check_weights(&self) -> Result<()> {
        if !(self.a12 > 0.0 && self.a22 > 0.0) {
            return Err(Error::WeightSign {
                a12: self.a12,
                a22: self.a22,
            });
        }
        Ok(())
    }
}

/// Discrete eigenproblem on the ball of radius `h_inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSetup {
    pub lin: LinearizationMatrix,
    /// Common diffusivity.
    pub d: f64,
    pub dim_n: u32,
    pub h_inf: f64,
    /// Number of mesh intervals on `[0, h_inf]`.
    pub intervals: usize,
    /// Scales the `phi`-`psi` coupling; 1 for the model, 0 decouples the fields.
    pub coupling: f64,
}

impl EigenSetup {
    pub fn new(params: &ModelParams, h_inf: f64, intervals: usize) -> Result<Self> {
        if !(h_inf.is_finite() && h_inf > 0.0) {
            return Err(Error::Domain(format!("h_inf must be > 0, got {h_inf}")));
        }
        if intervals < 4 {
            return Err(Error::Grid(format!("need at least 4 intervals, got {intervals}")));
        }
        if !params.equal_diffusion() {
            log::warn!("unequal diffusion; eigenproblem uses d3 = {}", params.d3);
        }
        Ok(Self {
            lin: linearization_matrix(params),
            d: params.common_diffusion(),
            dim_n: params.dim_n,
            h_inf,
            intervals,
            coupling: 1.0,
        })
    }

    pub fn dr(&self) -> f64 {
        self.h_inf / self.intervals as f64
    }

    /// Node radii including the Dirichlet node at `h_inf`.
    pub fn radii(&self) -> Vec<f64> {
        let dr = self.dr();
        let mut r: Vec<f64> = (0..=self.intervals).map(|i| i as f64 * dr).collect();
        r[self.intervals] = self.h_inf;
        r
    }

    /// Cell volumes of the unknown nodes.
    pub fn mass(&self) -> Vec<f64> {
        radial_cell_volumes(self.dr(), self.intervals, self.dim_n)
    }

    /// Stiffness matrix `K` with `v^T K v = sum_faces r^(n-1) (dv)^2 / dr`.
    pub fn stiffness(&self) -> Tridiag {
        let m = self.intervals;
        let dr = self.dr();
        let face = radial_face_weights(dr, m, self.dim_n);
        let mut k = Tridiag::zeros(m);
        for i in 0..m {
            let c = face[i] / dr;
            k.diag[i] += c;
            if i + 1 < m {
                k.diag[i + 1] += c;
                k.sup[i] = -c;
                k.sub[i + 1] = -c;
            }
        }
        k
    }

    fn pencil(&self, kind: PencilKind) -> BlockPencil {
        let LinearizationMatrix { a11, a12, a21, a22 } = self.lin;
        let k = self.stiffness();
        let w = self.mass();
        let sign = match kind {
            PencilKind::Energy => 1.0,
            PencilKind::Rate | PencilKind::Symmetrized => -1.0,
        };
        let block = |grad: f64, react: f64| {
            let mut t = k.clone();
            for i in 0..t.len() {
                t.sub[i] *= grad;
                t.sup[i] *= grad;
                t.diag[i] = grad * t.diag[i] + sign * react * w[i];
            }
            t
        };
        let (mass_phi, mass_psi) = match kind {
            PencilKind::Rate => (
                w.iter().map(|x| a22 * x).collect(),
                w.iter().map(|x| a12 * x).collect(),
            ),
            _ => (w.clone(), w.clone()),
        };
        // Reaction part of the standard form; identical at every node.
        let floor = match kind {
            PencilKind::Rate => sym2_min(-a11, -self.coupling * (a12 * a22).sqrt(), -a21),
            _ => sym2_min(sign * a11 * a22, sign * self.coupling * a12 * a22, sign * a12 * a21),
        };
        BlockPencil {
            floor,
            phi: block(self.d * a22, a11 * a22),
            psi: block(self.d * a12, a12 * a21),
            coupling: w.iter().map(|x| sign * self.coupling * a12 * a22 * x).collect(),
            mass_phi,
            mass_psi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PencilKind {
    Energy,
    Rate,
    Symmetrized,
}

/// `[[P, diag(c)], [diag(c), Q]]` with diagonal mass `diag(m_phi, m_psi)`.
#[derive(Debug, Clone)]
struct BlockPencil {
    /// Lower bound of the standard-form spectrum (the stiffness part is
    /// positive semi-definite).
    floor: f64,
    phi: Tridiag,
    psi: Tridiag,
    coupling: Vec<f64>,
    mass_phi: Vec<f64>,
    mass_psi: Vec<f64>,
}

impl BlockPencil {
    /// Quadratic form `x^T A x` for `x = (phi, psi)` on the unknown nodes.
    fn quadratic_form(&self, phi: &[f64], psi: &[f64]) -> f64 {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let cross: f64 = (0..phi.len()).map(|i| self.coupling[i] * phi[i] * psi[i]).sum();
        dot(phi, &self.phi.apply(phi)) + dot(psi, &self.psi.apply(psi)) + 2.0 * cross
    }

    /// Standard form `M^-1/2 A M^-1/2`.
    fn standard(&self) -> BlockOp {
        let scale = |t: &Tridiag, m: &[f64]| {
            let s: Vec<f64> = m.iter().map(|x| 1.0 / x.sqrt()).collect();
            let mut out = t.clone();
            for i in 0..t.len() {
                out.diag[i] *= s[i] * s[i];
                if i > 0 {
                    out.sub[i] *= s[i] * s[i - 1];
                }
                if i + 1 < t.len() {
                    out.sup[i] *= s[i] * s[i + 1];
                }
            }
            out
        };
        BlockOp {
            floor: self.floor,
            phi: scale(&self.phi, &self.mass_phi),
            psi: scale(&self.psi, &self.mass_psi),
            coupling: (0..self.coupling.len())
                .map(|i| self.coupling[i] / (self.mass_phi[i] * self.mass_psi[i]).sqrt())
                .collect(),
            half_mass_phi: self.mass_phi.iter().map(|x| x.sqrt()).collect(),
            half_mass_psi: self.mass_psi.iter().map(|x| x.sqrt()).collect(),
        }
    }
}

/// Symmetric block operator in standard form; vectors are `[phi; psi]`.
#[derive(Debug, Clone)]
struct BlockOp {
    floor: f64,
    phi: Tridiag,
    psi: Tridiag,
    coupling: Vec<f64>,
    half_mass_phi: Vec<f64>,
    half_mass_psi: Vec<f64>,
}

impl BlockOp {
    fn m(&self) -> usize {
        self.coupling.len()
    }

    fn apply(&self, y: &[f64]) -> Vec<f64> {
        let m = self.m();
        let (a, b) = y.split_at(m);
        let mut out = self.phi.apply(a);
        out.extend(self.psi.apply(b));
        for i in 0..m {
            out[i] += self.coupling[i] * b[i];
            out[m + i] += self.coupling[i] * a[i];
        }
        out
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut c = DMatrix::zeros(2 * m, 2 * m);
        for (off, t) in [(0, &self.phi), (m, &self.psi)] {
            for i in 0..m {
                c[(off + i, off + i)] = t.diag[i];
                if i + 1 < m {
                    c[(off + i, off + i + 1)] = t.sup[i];
                    c[(off + i + 1, off + i)] = t.sub[i + 1];
                }
            }
        }
        for i in 0..m {
            c[(i, m + i)] = self.coupling[i];
            c[(m + i, i)] = self.coupling[i];
        }
        c
    }

    /// Solves the block-diagonal part shifted by `-shift`.
    fn precondition(&self, r: &[f64], shift: f64) -> Vec<f64> {
        let m = self.m();
        let mut out = Vec::with_capacity(2 * m);
        for (k, t) in [&self.phi, &self.psi].into_iter().enumerate() {
            let mut s = t.clone();
            s.diag.iter_mut().for_each(|x| *x -= shift);
            let part = &r[k * m..(k + 1) * m];
            out.extend(s.solve(part).unwrap_or_else(|| part.to_vec()));
        }
        out
    }

    /// Maps a standard-form vector back to fields normalised in
    /// `int (phi^2 + psi^2) r^(n-1) dr` with the given cell volumes.
    fn to_fields(&self, y: &[f64], volumes: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.m();
        let mut phi: Vec<f64> = (0..m).map(|i| y[i] / self.half_mass_phi[i]).collect();
        let mut psi: Vec<f64> = (0..m).map(|i| y[m + i] / self.half_mass_psi[i]).collect();
        let norm: f64 = (0..m)
            .map(|i| volumes[i] * (phi[i] * phi[i] + psi[i] * psi[i]))
            .sum::<f64>()
            .sqrt();
        let sign = if phi.iter().chain(&psi).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        for x in phi.iter_mut().chain(psi.iter_mut()) {
            *x *= sign / norm;
        }
        phi.push(0.0);
        psi.push(0.0);
        (phi, psi)
    }
}

/// Smaller eigenvalue of `[[a, b], [b, c]]`.
fn sym2_min(a: f64, b: f64, c: f64) -> f64 {
    0.5 * (a + c) - (0.25 * (a - c).powi(2) + b * b).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Removes the components along the (orthonormal) `basis`, twice for stability.
fn project_out(x: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(x, b);
            x.iter_mut().zip(b).for_each(|(xi, bi)| *xi -= c * bi);
        }
    }
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = norm(x);
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// Leading modes of the analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    /// Slowest eigenvalue (see the producing function for its meaning).
    pub lambda1: f64,
    pub lambda2: f64,
    /// Principal pair on [`EigenSetup::radii`], normalised in `L^2(r^(n-1) dr)`.
    pub phi1: Vec<f64>,
    pub psi1: Vec<f64>,
    /// Minimum of `E[phi, psi] / (2 int (phi^2 + psi^2))`.
    pub rayleigh_value: f64,
    /// Largest standard-form eigen-residual of the returned pairs.
    pub residual: f64,
}

/// Everything [`direct_eigensolve`] computes.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectSpectrum {
    /// Decay rates of `L'` (positive means decaying), slowest first, with
    /// the principal mode.
    pub rates: EigenResult,
    /// Two smallest values of the energy quotient.
    pub quotient: [f64; 2],
    /// Largest eigenvalue of the symmetrised operator `D L'`.
    pub symmetrized_max: f64,
}

const INVERSE_TOL: f64 = 1e-11;
const MAX_INVERSE_ITERATIONS: usize = 20_000;

/// Two smallest eigenpairs of the dense symmetric `c` by shifted inverse
/// iteration with deflation, polished by Rayleigh-quotient steps.
fn smallest_pairs(c: &DMatrix<f64>, lower: f64) -> Result<([f64; 2], Vec<Vec<f64>>, f64)> {
    let n = c.nrows();
    let scale = c.amax().max(1.0);
    let shift = lower - 1e-3 * (1.0 + lower.abs());
    let shifted = c - DMatrix::identity(n, n) * shift;
    let lu = shifted.lu();
    if !lu.is_invertible() {
        return Err(Error::SingularShift(shift));
    }
    let apply = |x: &[f64]| (c * DVector::from_column_slice(x)).as_slice().to_vec();
    let mut found: Vec<Vec<f64>> = Vec::new();
    let mut values = [0.0; 2];
    let mut worst = 0.0f64;
    for (k, value) in values.iter_mut().enumerate() {
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * (k + 3)) as f64).sin()).collect();
        project_out(&mut x, &found);
        normalize(&mut x);
        let mut rho = 0.0;
        let mut res = f64::INFINITY;
        for _ in 0..MAX_INVERSE_ITERATIONS {
            let y = lu
                .solve(&DVector::from_column_slice(&x))
                .ok_or(Error::SingularShift(shift))?;
            x = y.as_slice().to_vec();
            project_out(&mut x, &found);
            normalize(&mut x);
            let cx = apply(&x);
            rho = dot(&x, &cx);
            res = norm(&cx.iter().zip(&x).map(|(a, b)| a - rho * b).collect::<Vec<_>>());
            if res <= 1e-9 * scale {
                break;
            }
        }
        if res > 1e-9 * scale {
            return Err(Error::NonConvergence {
                iterations: MAX_INVERSE_ITERATIONS,
                residual: res,
            });
        }
        // Rayleigh-quotient polishing within the deflated subspace.
        for _ in 0..3 {
            if res <= INVERSE_TOL * scale {
                break;
            }
            let Some(y) = (c - DMatrix::identity(n, n) * rho)
                .lu()
                .solve(&DVector::from_column_slice(&x))
            else {
                break;
            };
            let mut z = y.as_slice().to_vec();
            project_out(&mut z, &found);
            if normalize(&mut z) == 0.0 || z.iter().any(|v| !v.is_finite()) {
                break;
            }
            let cz = apply(&z);
            let rz = dot(&z, &cz);
            let rres = norm(&cz.iter().zip(&z).map(|(a, b)| a - rz * b).collect::<Vec<_>>());
            if rres < res {
                x = z;
                rho = rz;
                res = rres;
            } else {
                break;
            }
        }
        worst = worst.max(res);
        *value = rho;
        found.push(x);
    }
    Ok((values, found, worst))
}

/// Assembles the discrete operators and solves them directly.
pub fn direct_eigensolve(setup: &EigenSetup) -> Result<DirectSpectrum> {
    setup.lin.check_weights()?;
    let volumes = setup.mass();

    let energy = setup.pencil(PencilKind::Energy).standard();
    let (q, _, q_res) = smallest_pairs(&energy.to_dense(), energy.floor)?;

    let rate = setup.pencil(PencilKind::Rate).standard();
    let (lam, vecs, r_res) = smallest_pairs(&rate.to_dense(), rate.floor)?;
    let (phi1, psi1) = rate.to_fields(&vecs[0], &volumes);

    let sym = setup.pencil(PencilKind::Symmetrized).standard();
    let (s, _, _) = smallest_pairs(&sym.to_dense(), sym.floor)?;

    Ok(DirectSpectrum {
        rates: EigenResult {
            lambda1: lam[0],
            lambda2: lam[1],
            phi1,
            psi1,
            rayleigh_value: 0.5 * q[0],
            residual: q_res.max(r_res),
        },
        quotient: [0.5 * q[0], 0.5 * q[1]],
        symmetrized_max: -s[0],
    })
}

/// Value of the energy functional for fields given on [`EigenSetup::radii`].
pub fn energy_value(phi: &[f64], psi: &[f64], setup: &EigenSetup) -> Result<f64> {
    setup.lin.check_weights()?;
    let m = setup.intervals;
    if phi.len() != m + 1 || psi.len() != m + 1 {
        return Err(Error::Grid(format!(
            "fields must have {} nodes, got {} and {}",
            m + 1,
            phi.len(),
            psi.len()
        )));
    }
    let tol = 1e-12 * phi.iter().chain(psi).fold(1.0f64, |a, x| a.max(x.abs()));
    if phi[m].abs() > tol || psi[m].abs() > tol {
        return Err(Error::Domain("fields must vanish at h_inf".into()));
    }
    Ok(setup
        .pencil(PencilKind::Energy)
        .quadratic_form(&phi[..m], &psi[..m]))
}

/// `int (|phi'|^2 + |psi'|^2) r^(n-1)` and `int (phi^2 + psi^2) r^(n-1)` in
/// the same discretisation as [`energy_value`].
pub fn discrete_norms(phi: &[f64], psi: &[f64], setup: &EigenSetup) -> (f64, f64) {
    let m = setup.intervals;
    let k = setup.stiffness();
    let w = setup.mass();
    let grad = dot(&phi[..m], &k.apply(&phi[..m])) + dot(&psi[..m], &k.apply(&psi[..m]));
    let l2 = (0..m).map(|i| w[i] * (phi[i] * phi[i] + psi[i] * psi[i])).sum();
    (grad, l2)
}

/// Starting fields for [`rayleigh_minimize`].
#[derive(Debug, Clone, PartialEq)]
pub enum Seed {
    Ones,
    /// Uniform random values from a fixed-seed generator.
    Random(u64),
    /// Explicit fields on the unknown nodes (length `intervals`) or on all
    /// nodes.
    Fields(Vec<f64>, Vec<f64>),
}

/// Options of the variational solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    /// Stop when the Euler-Lagrange residual falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 5_000,
        }
    }
}

/// Minimises the energy quotient `E / (2 int (phi^2 + psi^2))` over fields
/// vanishing at `h_inf`, then again orthogonally to the minimiser.
///
/// Each iteration is a Rayleigh-Ritz step on the span of the iterate, its
/// preconditioned gradient and the previous search direction; the
/// preconditioner solves the shifted diagonal blocks exactly.
///
/// `lambda1`, `lambda2` are the two smallest quotient values.
pub fn rayleigh_minimize(
    setup: &EigenSetup,
    seed: &Seed,
    options: &MinimizeOptions,
) -> Result<EigenResult> {
    setup.lin.check_weights()?;
    let op = setup.pencil(PencilKind::Energy).standard();
    let m = setup.intervals;
    let w = setup.mass();
    let shift = op.floor - 1e-3 * (1.0 + op.floor.abs());

    let start: Vec<f64> = match seed {
        Seed::Ones => vec![1.0; 2 * m],
        Seed::Random(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*s);
            (0..2 * m).map(|_| rng.gen_range(0.0..1.0)).collect()
        }
        Seed::Fields(phi, psi) => {
            if phi.len() < m || psi.len() < m {
                return Err(Error::Grid(format!("seed fields need {m} values")));
            }
            phi[..m].iter().chain(&psi[..m]).copied().collect()
        }
    };
    // Standard-form coordinates: y = M^1/2 x.
    let to_standard = |x: &[f64]| -> Vec<f64> {
        (0..2 * m)
            .map(|i| {
                let hm = if i < m { op.half_mass_phi[i] } else { op.half_mass_psi[i - m] };
                x[i] * hm
            })
            .collect()
    };

    let mut found: Vec<Vec<f64>> = Vec::new();
    let mut values = [0.0; 2];
    let mut worst = 0.0f64;
    for (k, value) in values.iter_mut().enumerate() {
        let mut x = to_standard(&start);
        if k > 0 {
            // Break the symmetry with the first minimiser's sign pattern.
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed + k as u64);
            x.iter_mut().for_each(|v| *v += rng.gen_range(-0.5..0.5));
        }
        project_out(&mut x, &found);
        if normalize(&mut x) == 0.0 {
            return Err(Error::Domain("seed has no admissible component".into()));
        }
        let (rho, y, res) = lobpcg(&op, x, &found, shift, options)?;
        worst = worst.max(res);
        *value = 0.5 * rho;
        found.push(y);
    }
    let (phi1, psi1) = op.to_fields(&found[0], &w);
    Ok(EigenResult {
        lambda1: values[0],
        lambda2: values[1],
        phi1,
        psi1,
        rayleigh_value: values[0],
        residual: worst,
    })
}

fn lobpcg(
    op: &BlockOp,
    mut x: Vec<f64>,
    constraints: &[Vec<f64>],
    shift: f64,
    options: &MinimizeOptions,
) -> Result<(f64, Vec<f64>, f64)> {
    let mut prev: Option<Vec<f64>> = None;
    let mut res = f64::INFINITY;
    for _ in 0..options.max_iterations {
        let cx = op.apply(&x);
        let rho = dot(&x, &cx);
        let r: Vec<f64> = cx.iter().zip(&x).map(|(a, b)| a - rho * b).collect();
        res = norm(&r);
        if res < options.tolerance {
            return Ok((rho, x, res));
        }
        let mut basis = vec![x.clone()];
        let mut candidates = vec![op.precondition(&r, shift)];
        if let Some(p) = prev.take() {
            candidates.push(p);
        }
        for mut v in candidates {
            project_out(&mut v, constraints);
            project_out(&mut v, &basis);
            let before = norm(&v);
            if before > 1e-14 {
                v.iter_mut().for_each(|t| *t /= before);
                project_out(&mut v, &basis);
                if normalize(&mut v) > 0.5 {
                    basis.push(v);
                }
            }
        }
        let images: Vec<Vec<f64>> = basis.iter().map(|b| op.apply(b)).collect();
        let k = basis.len();
        let gram = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i])));
        let eig = SymmetricEigen::new(gram);
        let (imin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let coef = eig.eigenvectors.column(imin);
        let mut next = vec![0.0; x.len()];
        let mut dir = vec![0.0; x.len()];
        for (j, b) in basis.iter().enumerate() {
            for (t, v) in b.iter().enumerate() {
                next[t] += coef[j] * v;
                if j > 0 {
                    dir[t] += coef[j] * v;
                }
            }
        }
        project_out(&mut next, constraints);
        normalize(&mut next);
        if normalize(&mut dir) > 0.0 {
            prev = Some(dir);
        }
        x = next;
    }
    Err(Error::NonConvergence {
        iterations: options.max_iterations,
        residual: res,
    })
}

/// Euler-Lagrange residual `|| M^-1 A x - 2 lambda x ||_M / ||x||_M` of a pair
/// on [`EigenSetup::radii`] for the energy functional.
pub fn euler_lagrange_residual(phi: &[f64], psi: &[f64], lambda: f64, setup: &EigenSetup) -> f64 {
    let m = setup.intervals;
    let op = setup.pencil(PencilKind::Energy).standard();
    let y: Vec<f64> = (0..m)
        .map(|i| phi[i] * op.half_mass_phi[i])
        .chain((0..m).map(|i| psi[i] * op.half_mass_psi[i]))
        .collect();
    let cy = op.apply(&y);
    let r: Vec<f64> = cy.iter().zip(&y).map(|(a, b)| a - 2.0 * lambda * b).collect();
    norm(&r) / norm(&y)
}

/// Fitted exponential decay of a positive series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Leading decay rate.
    pub rate: f64,
    /// Amplitude of the leading mode at `t = 0`.
    pub amplitude: f64,
    /// Difference between the next and the leading rate, when the residual
    /// carries enough signal to fit it.
    pub gap: Option<f64>,
    pub samples: usize,
}

const MIN_FIT_SAMPLES: usize = 3;

/// Least-squares line through `(t, log y)`; returns `(slope, intercept)`.
fn log_linear_fit(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let tm = t.iter().sum::<f64>() / n;
    let ym = ly.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(&ly).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let sxx: f64 = t.iter().map(|a| (a - tm).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, ym - slope * tm)
}

/// Fits `y ~ a e^(-rate t) + b e^(-(rate + gap) t)` over `window`.
///
/// The leading rate comes from a log-linear fit over the late half of the
/// window; the residual over the window then gives the gap, and the leading
/// fit is repeated on the series with the second mode removed.
pub fn decay_rate_fit(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let (t, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t >= window.0 && t <= window.1)
        .map(|(&t, &y)| (t, y))
        .unzip();
    if t.len() < MIN_FIT_SAMPLES {
        return Err(Error::WindowTooShort {
            got: t.len(),
            need: MIN_FIT_SAMPLES,
        });
    }
    if y.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::NonDecay { slope: f64::NAN });
    }
    let (slope, _) = log_linear_fit(&t, &y);
    if !(slope < 0.0) {
        return Err(Error::NonDecay { slope });
    }

    let tail = t.len() / 2;
    let fit_leading = |y: &[f64]| {
        if t.len() - tail >= MIN_FIT_SAMPLES {
            log_linear_fit(&t[tail..], &y[tail..])
        } else {
            log_linear_fit(&t, y)
        }
    };
    let (mut s1, mut c1) = fit_leading(&y);
    let mut gap = None;
    for _ in 0..3 {
        let resid: Vec<f64> = t
            .iter()
            .zip(&y)
            .map(|(&ti, &yi)| yi - (c1 + s1 * ti).exp())
            .collect();
        let (rt, ry): (Vec<f64>, Vec<f64>) = t
            .iter()
            .zip(&resid)
            .zip(&y)
            .filter(|((_, &r), &yi)| r > 1e-4 * yi)
            .map(|((&ti, &r), _)| (ti, r))
            .unzip();
        if rt.len() < MIN_FIT_SAMPLES {
            break;
        }
        let (s2, c2) = log_linear_fit(&rt, &ry);
        if !(s2 < s1) {
            break;
        }
        gap = Some(s1 - s2);
        let cleaned: Vec<f64> = t
            .iter()
            .zip(&y)
            .map(|(&ti, &yi)| yi - (c2 + s2 * ti).exp())
            .collect();
        if cleaned.iter().any(|&v| v <= 0.0) {
            break;
        }
        (s1, c1) = log_linear_fit(&t, &cleaned);
    }
    Ok(DecayFit {
        rate: -s1,
        amplitude: c1.exp(),
        gap,
        samples: t.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thresholds::{lambda1_ball, tridiagonal_eigenvalue};
    use proptest::prelude::*;

    fn vanishing() -> ModelParams {
        ModelParams {
            a: 1.0,
            alpha: 0.5,
            r1: 1.0,
            r2: 1.0,
            beta1: 0.5,
            p: 0.5,
            ..Default::default()
        }
    }

    fn setup(intervals: usize) -> EigenSetup {
        EigenSetup::new(&vanishing(), 1.1, intervals).unwrap()
    }

    /// Principal eigenvalues of the scalar FV Laplacian on the same mesh.
    fn laplacian_eigs(s: &EigenSetup, k: usize) -> f64 {
        let (d, e) = crate::thresholds::radial_dirichlet_operator(s.h_inf, s.dim_n, s.intervals);
        tridiagonal_eigenvalue(&d, &e, k)
    }

    #[test]
    fn linearization_example() {
        let p = ModelParams {
            a: 1.0,
            alpha: 1.0,
            mu1: 1.0,
            p: 0.5,
            beta1: 0.5,
            r1: 0.2,
            mu2: 0.3,
            r2: 0.4,
            mu3: 0.6,
            ..Default::default()
        };
        let l = linearization_matrix(&p);
        for (x, y) in [(l.a11, -1.0), (l.a12, 0.5), (l.a21, -0.5), (l.a22, 0.5)] {
            assert!((x - y).abs() < 1e-15);
        }
        assert_eq!(linearization_matrix(&ModelParams { p: 1.0, ..p }).a12, 0.0);
        assert_eq!(linearization_matrix(&ModelParams { beta1: 0.0, ..p }).a22, 0.0);
    }

    #[test]
    fn weight_signs_checked() {
        let mut s = setup(16);
        s.lin.a12 = 0.0;
        let z = vec![0.0; 17];
        assert!(matches!(energy_value(&z, &z, &s), Err(Error::WeightSign { .. })));
        assert!(matches!(direct_eigensolve(&s), Err(Error::WeightSign { .. })));
        assert!(matches!(
            rayleigh_minimize(&s, &Seed::Ones, &MinimizeOptions::default()),
            Err(Error::WeightSign { .. })
        ));
    }

    #[test]
    fn energy_of_zero_and_single_field() {
        let s = setup(32);
        let z = vec![0.0; 33];
        assert_eq!(energy_value(&z, &z, &s).unwrap(), 0.0);
        let r = s.radii();
        let phi: Vec<f64> = r.iter().map(|x| (std::f64::consts::PI * x / 2.2).cos()).collect();
        let mut phi = phi;
        phi[32] = 0.0;
        let (grad, l2) = discrete_norms(&phi, &z, &s);
        let expected = s.d * s.lin.a22 * grad + s.lin.a11 * s.lin.a22 * l2;
        assert!((energy_value(&phi, &z, &s).unwrap() - expected).abs() < 1e-12);
        assert!(energy_value(&vec![1.0; 33], &z, &s).is_err());
    }

    #[test]
    fn energy_matches_dense_quadratic_form() {
        let s = setup(40);
        let r = s.radii();
        let mut mode: Vec<f64> = r.iter().map(|x| (std::f64::consts::PI * x / 2.2).cos()).collect();
        mode[40] = 0.0;
        // Dense matrix of the unscaled pencil, built independently.
        let k = s.stiffness();
        let w = s.mass();
        let m = 40;
        let l = s.lin;
        let mut a = DMatrix::<f64>::zeros(2 * m, 2 * m);
        for i in 0..m {
            for j in 0..m {
                let kij = if i == j {
                    k.diag[i]
                } else if j == i + 1 {
                    k.sup[i]
                } else if i == j + 1 {
                    k.sub[i]
                } else {
                    0.0
                };
                let wij = if i == j { w[i] } else { 0.0 };
                a[(i, j)] = s.d * l.a22 * kij + l.a11 * l.a22 * wij;
                a[(m + i, m + j)] = s.d * l.a12 * kij + l.a12 * l.a21 * wij;
                a[(i, m + j)] = l.a12 * l.a22 * wij;
                a[(m + i, j)] = l.a12 * l.a22 * wij;
            }
        }
        let x = DVector::from_iterator(2 * m, mode[..m].iter().chain(&mode[..m]).copied());
        let expected = x.dot(&(&a * &x));
        let got = energy_value(&mode, &mode, &s).unwrap();
        assert!((got - expected).abs() < 1e-10 * expected.abs().max(1.0));
    }

    #[test]
    fn operators_are_symmetric() {
        let s = setup(24);
        for kind in [PencilKind::Energy, PencilKind::Rate, PencilKind::Symmetrized] {
            let c = s.pencil(kind).standard().to_dense();
            assert_eq!(c, c.transpose());
        }
    }

    #[test]
    fn direct_matches_separable_closed_form() {
        // Every pencil is a Kronecker sum of the scalar Laplacian and a 2x2
        // block, so its spectrum follows from the scalar eigenvalues.
        let s = setup(64);
        let l = s.lin;
        let spectrum = direct_eigensolve(&s).unwrap();
        let k1 = laplacian_eigs(&s, 0);
        let k2 = laplacian_eigs(&s, 1);
        let (sig_max, sig_min) = l.reaction_eigenvalues();
        let mut rates = vec![s.d * k1 - sig_max, s.d * k1 - sig_min, s.d * k2 - sig_max];
        rates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((spectrum.rates.lambda1 - rates[0]).abs() < 1e-9 * rates[0].abs());
        assert!((spectrum.rates.lambda2 - rates[1]).abs() < 1e-9 * rates[1].abs());

        let energy = |k: f64| {
            0.5 * sym2_min(
                l.a22 * (s.d * k + l.a11),
                l.a12 * l.a22,
                l.a12 * (s.d * k + l.a21),
            )
        };
        assert!((spectrum.quotient[0] - energy(k1)).abs() < 1e-9 * energy(k1).abs());
        assert!(spectrum.symmetrized_max < 0.0);
        assert!(spectrum.rates.residual < 1e-6);
        assert!(spectrum.rates.phi1.iter().all(|&v| v >= -1e-12));
        assert!(spectrum.rates.psi1.iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn decoupled_direct_rates_are_scalar_problems() {
        let mut s = setup(64);
        s.coupling = 0.0;
        let spec = direct_eigensolve(&s).unwrap();
        let k1 = laplacian_eigs(&s, 0);
        let mut expect = [s.d * k1 - s.lin.a11, s.d * k1 - s.lin.a21];
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((spec.rates.lambda1 - expect[0]).abs() < 1e-9 * expect[0]);
        assert!((spec.rates.lambda2 - expect[1]).abs() < 1e-9 * expect[1]);
    }

    #[test]
    fn rate_converges_at_second_order() {
        let l = linearization_matrix(&vanishing());
        let exact = lambda1_ball(1.1, 1).unwrap() - l.reaction_eigenvalues().0;
        let err = |m| (direct_eigensolve(&setup(m)).unwrap().rates.lambda1 - exact).abs();
        let ratio = err(32) / err(64);
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn rayleigh_matches_direct() {
        let s = setup(128);
        let spec = direct_eigensolve(&s).unwrap();
        let res = rayleigh_minimize(&s, &Seed::Ones, &MinimizeOptions::default()).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        assert!(rel(res.lambda1, spec.quotient[0]) < 1e-8);
        assert!(rel(res.lambda2, spec.quotient[1]) < 1e-8);
        let el = euler_lagrange_residual(&res.phi1, &res.psi1, res.lambda1, &s);
        assert!(el < 1e-8, "{el}");
    }

    #[test]
    fn seeds_agree() {
        let s = setup(96);
        let opts = MinimizeOptions::default();
        let a = rayleigh_minimize(&s, &Seed::Ones, &opts).unwrap();
        let b = rayleigh_minimize(&s, &Seed::Random(7), &opts).unwrap();
        assert!((a.lambda1 - b.lambda1).abs() < 1e-8 * a.lambda1.abs());
        for (x, y) in a.phi1.iter().zip(&b.phi1) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn decoupled_quotient_is_scalar_identity() {
        // With the cross term removed, the minimiser lives in one field and the
        // quotient is a22 (d lambda1 + a11) / 2 for the phi field.
        let p = ModelParams {
            a: 1.0,
            alpha: 2.0,
            p: 0.5,
            beta1: 0.5,
            ..Default::default()
        };
        let mut s = EigenSetup::new(&p, 1.0, 400).unwrap();
        s.coupling = 0.0;
        let l = s.lin;
        let lam = lambda1_ball(1.0, 1).unwrap();
        let phi_only = l.a22 * (s.d * lam + l.a11) / 2.0;
        let psi_only = l.a12 * (s.d * lam + l.a21) / 2.0;
        assert!(phi_only < psi_only);
        let res = rayleigh_minimize(&s, &Seed::Ones, &MinimizeOptions::default()).unwrap();
        assert!((res.lambda1 - phi_only).abs() < 1e-5, "{} vs {}", res.lambda1, phi_only);
        assert!(res.psi1.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn homogeneity() {
        let s = setup(32);
        let r = s.radii();
        let phi: Vec<f64> = r.iter().map(|x| 1.1 - x).collect();
        let psi: Vec<f64> = r.iter().map(|x| (1.1 - x) * x).collect();
        let e = energy_value(&phi, &psi, &s).unwrap();
        for c in [-3.0, 0.5, 7.0] {
            let sp: Vec<f64> = phi.iter().map(|v| c * v).collect();
            let sq: Vec<f64> = psi.iter().map(|v| c * v).collect();
            assert!((energy_value(&sp, &sq, &s).unwrap() - c * c * e).abs() < 1e-12 * e.abs().max(1.0));
        }
    }

    #[test]
    fn fit_pure_exponential() {
        let t: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|&t| 2.0 * (-3.0 * t).exp()).collect();
        let fit = decay_rate_fit(&t, &y, (0.0, 10.0)).unwrap();
        assert!((fit.rate - 3.0).abs() < 1e-6);
        assert!((fit.amplitude - 2.0).abs() < 1e-6);
    }

    #[test]
    fn fit_two_exponentials() {
        let t: Vec<f64> = (0..=200).map(|k| k as f64 * 0.05).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|&t| (-3.0 * t).exp() + 0.01 * (-5.0 * t).exp())
            .collect();
        let fit = decay_rate_fit(&t, &y, (0.0, 10.0)).unwrap();
        assert!((fit.rate - 3.0).abs() < 0.05 * 3.0);
        let gap = fit.gap.unwrap();
        assert!((gap - 2.0).abs() < 0.05 * 2.0, "gap {gap}");
    }

    #[test]
    fn fit_errors() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert!(matches!(
            decay_rate_fit(&t, &[1.0, 0.5, 0.25, 0.1], (0.5, 1.5)),
            Err(Error::WindowTooShort { got: 1, need: 3 })
        ));
        assert!(matches!(
            decay_rate_fit(&t, &[1.0, 2.0, 4.0, 8.0], (0.0, 3.0)),
            Err(Error::NonDecay { .. })
        ));
    }

    fn sub_threshold() -> impl Strategy<Value = ModelParams> {
        (
            0.1f64..3.0,
            0.1f64..3.0,
            0.1f64..3.0,
            0.1f64..3.0,
            0.0f64..2.0,
            0.0f64..2.0,
            0.01f64..2.0,
            0.0f64..1.0,
            0.01f64..0.99,
        )
            .prop_map(|(a, mu1, mu2, mu3, r1, r2, beta1, frac, p)| {
                let bound = mu1 * (r1 + mu2).min(r2 + mu3) / a;
                ModelParams {
                    a,
                    alpha: frac * bound,
                    mu1,
                    mu2,
                    mu3,
                    r1,
                    r2,
                    beta1,
                    p,
                    ..Default::default()
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sign_quantity_nonnegative_below_threshold(p in sub_threshold()) {
            prop_assume!(crate::thresholds::r0_max(&p) < 1.0);
            prop_assert!(linearization_matrix(&p).sign_quantity() >= 0.0);
        }

        #[test]
        fn coercivity_bound(
            vals in proptest::collection::vec(-1.0f64..1.0, 2 * 24),
        ) {
            let s = setup(24);
            let l = s.lin;
            let mut phi = vals[..24].to_vec();
            let mut psi = vals[24..].to_vec();
            phi.push(0.0);
            psi.push(0.0);
            let e = energy_value(&phi, &psi, &s).unwrap();
            let (grad, l2) = discrete_norms(&phi, &psi, &s);
            let c = (s.d * l.a22).min(s.d * l.a12);
            let big_c = (l.a11.abs() * l.a22).max(l.a12 * l.a21.abs()) + l.a12 * l.a22;
            prop_assert!(e >= c * grad - big_c * l2 - 1e-12);
        }
    }
}
