//! Continuum reference: the heat semigroup of the homogenized limit process on
//! the unit torus, with a Crank-Nicolson solver and closed-form Fourier decay
//! as two independent routes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::conductance::harmonic_mean;
use crate::error::{Error, Result};
use crate::graph::{GraphInstance, TestFunction};

/// Largest tolerated error of the solver's decay factor for the slowest mode.
pub const RESOLUTION_TOL: f64 = 1e-4;

/// Equispaced mesh values on the `dim`-torus; `mesh` points per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    mesh: usize,
    dim: usize,
    values: Vec<f64>,
    diffusivity: Option<f64>,
}

impl DensityProfile {
    pub fn new(mesh: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if mesh < 4 {
            return Err(Error::Resolution(format!(
                "mesh must have at least 4 points, got {mesh}"
            )));
        }
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedTopology(format!(
                "{dim}-dimensional meshes"
            )));
        }
        if values.len() != mesh.pow(dim as u32) {
            return Err(Error::InvalidProfile(format!(
                "{} values for a {dim}-dimensional mesh of side {mesh}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile(
                "profile values must be finite".into(),
            ));
        }
        Ok(Self {
            mesh,
            dim,
            values,
            diffusivity: None,
        })
    }

    /// Samples `f` at the mesh points `i / mesh`.
    pub fn from_fn(mesh: usize, dim: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let h = 1.0 / mesh as f64;
        let values = match dim {
            1 => (0..mesh).map(|i| f(&[i as f64 * h])).collect(),
            2 => (0..mesh * mesh)
                .map(|idx| f(&[(idx % mesh) as f64 * h, (idx / mesh) as f64 * h]))
                .collect(),
            _ => Vec::new(),
        };
        Self::new(mesh, dim, values)
    }

    pub fn mesh(&self) -> usize {
        self.mesh
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Diffusivity the profile was evolved with, if any.
    pub fn diffusivity(&self) -> Option<f64> {
        self.diffusivity
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Periodic trapezoid rule for `int phi(u) value(u) du`.
    pub fn integrate_against(&self, phi: &TestFunction) -> f64 {
        let other = Self::from_fn(self.mesh, self.dim, |x| phi.eval(x)).expect("same mesh");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / self.values.len() as f64
    }

    /// Periodic (bi)linear interpolation; exact at mesh points.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let m = self.mesh;
        let locate = |c: f64| {
            let s = c.rem_euclid(1.0) * m as f64;
            let i = s.floor();
            let frac = s - i;
            let i = i as usize % m;
            if frac < 1e-9 {
                (i, 0.0)
            } else if frac > 1.0 - 1e-9 {
                ((i + 1) % m, 0.0)
            } else {
                (i, frac)
            }
        };
        match self.dim {
            1 => {
                let (i, w) = locate(x[0]);
                (1.0 - w) * self.values[i]
                    + if w > 0.0 {
                        w * self.values[(i + 1) % m]
                    } else {
                        0.0
                    }
            }
            _ => {
                let (i, wx) = locate(x[0]);
                let (j, wy) = locate(x[1]);
                let at = |a: usize, b: usize| self.values[(a % m) + m * (b % m)];
                let mut v = (1.0 - wx) * (1.0 - wy) * at(i, j);
                if wx > 0.0 {
                    v += wx * (1.0 - wy) * at(i + 1, j);
                }
                if wy > 0.0 {
                    v += (1.0 - wx) * wy * at(i, j + 1);
                }
                if wx > 0.0 && wy > 0.0 {
                    v += wx * wy * at(i + 1, j + 1);
                }
                v
            }
        }
    }
}

/// Initial macroscopic density `rho_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum InitialProfile {
    Constant {
        value: f64,
    },
    /// `mean + amplitude * cos(2 pi <k, u>)`.
    Cosine {
        mean: f64,
        amplitude: f64,
        k: Vec<i64>,
    },
    /// `base + height * bump(center, radius)`.
    Bump {
        base: f64,
        height: f64,
        center: Vec<f64>,
        radius: f64,
    },
}

impl InitialProfile {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            InitialProfile::Constant { value } => *value,
            InitialProfile::Cosine { mean, amplitude, k } => {
                mean + amplitude * TestFunction::CosineMode { k: k.clone() }.eval(x)
            }
            InitialProfile::Bump {
                base,
                height,
                center,
                radius,
            } => {
                base + height
                    * TestFunction::Bump {
                        center: center.clone(),
                        radius: *radius,
                    }
                    .eval(x)
            }
        }
    }

    /// Range of values taken on the torus.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            InitialProfile::Constant { value } => (*value, *value),
            InitialProfile::Cosine { mean, amplitude, k } => {
                if k.iter().all(|&ki| ki == 0) {
                    (mean + amplitude, mean + amplitude)
                } else {
                    (mean - amplitude.abs(), mean + amplitude.abs())
                }
            }
            InitialProfile::Bump { base, height, .. } => {
                (base.min(base + height), base.max(base + height))
            }
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let (lo, hi) = self.bounds();
        if !(lo >= 0.0 && hi <= 1.0) {
            return Err(Error::InvalidProfile(format!(
                "initial density ranges over [{lo}, {hi}], outside [0, 1]"
            )));
        }
        match self {
            InitialProfile::Cosine { k, .. } => {
                TestFunction::CosineMode { k: k.clone() }.validate(dim)
            }
            InitialProfile::Bump { center, radius, .. } => TestFunction::Bump {
                center: center.clone(),
                radius: *radius,
            }
            .validate(dim),
            InitialProfile::Constant { .. } => Ok(()),
        }
    }
}

/// `int_torus cos(2 pi <k,u>) cos(2 pi <l,u>) du`.
fn cosine_overlap(k: &[i64], l: &[i64]) -> f64 {
    let len = k.len().max(l.len());
    let at = |v: &[i64], i: usize| v.get(i).copied().unwrap_or(0);
    let zero_k = (0..len).all(|i| at(k, i) == 0);
    let zero_l = (0..len).all(|i| at(l, i) == 0);
    if zero_k && zero_l {
        1.0
    } else if (0..len).all(|i| at(k, i) == at(l, i)) || (0..len).all(|i| at(k, i) == -at(l, i)) {
        0.5
    } else {
        0.0
    }
}

fn squared_norm(k: &[i64]) -> f64 {
    k.iter().map(|&ki| (ki * ki) as f64).sum()
}

/// `int phi (P_t rho_0) dm` in closed form, when both are trigonometric.
pub fn closed_form_pairing(
    rho0: &InitialProfile,
    phi: &TestFunction,
    diffusivity: f64,
    t: f64,
) -> Option<f64> {
    let (phi_k, phi_scale) = match phi {
        TestFunction::CosineMode { k } => (k.clone(), 1.0),
        TestFunction::Constant { value } => (vec![0], *value),
        TestFunction::Bump { .. } => return None,
    };
    let decay = (-4.0 * PI * PI * squared_norm(&phi_k) * diffusivity * t).exp();
    let overlap = match rho0 {
        InitialProfile::Constant { value } => value * cosine_overlap(&phi_k, &[0]),
        InitialProfile::Cosine { mean, amplitude, k } => {
            mean * cosine_overlap(&phi_k, &[0]) + amplitude * cosine_overlap(&phi_k, k)
        }
        InitialProfile::Bump { .. } => return None,
    };
    Some(phi_scale * decay * overlap)
}

/// Constant-coefficient cyclic tridiagonal system `off, diag, off` with
/// corner entries `off`, solved by Thomas plus a Sherman-Morrison correction.
struct CyclicSolver {
    off: f64,
    gamma: f64,
    c_prime: Vec<f64>,
    denom: Vec<f64>,
    z: Vec<f64>,
    correction_den: f64,
}

impl CyclicSolver {
    fn new(n: usize, diag: f64, off: f64) -> Self {
        let gamma = -diag;
        let mut b = vec![diag; n];
        b[0] = diag - gamma;
        b[n - 1] = diag - off * off / gamma;
        let mut c_prime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        denom[0] = b[0];
        c_prime[0] = off / b[0];
        for i in 1..n {
            denom[i] = b[i] - off * c_prime[i - 1];
            c_prime[i] = off / denom[i];
        }
        let mut solver = Self {
            off,
            gamma,
            c_prime,
            denom,
            z: Vec::new(),
            correction_den: 0.0,
        };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = off;
        solver.thomas(&mut u);
        solver.correction_den = 1.0 + u[0] + off * u[n - 1] / gamma;
        solver.z = u;
        solver
    }

    fn thomas(&self, d: &mut [f64]) {
        let n = d.len();
        d[0] /= self.denom[0];
        for i in 1..n {
            d[i] = (d[i] - self.off * d[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            d[i] -= self.c_prime[i] * d[i + 1];
        }
    }

    fn solve(&self, d: &mut [f64]) {
        let n = d.len();
        self.thomas(d);
        let factor = (d[0] + self.off * d[n - 1] / self.gamma) / self.correction_den;
        for (x, z) in d.iter_mut().zip(&self.z) {
            *x -= factor * z;
        }
    }
}

/// One Crank-Nicolson step along a periodic line of `line.len()` points.
fn cn_line(line: &mut [f64], half_r: f64, solver: &CyclicSolver, scratch: &mut Vec<f64>) {
    let n = line.len();
    scratch.clear();
    scratch.extend((0..n).map(|i| {
        let left = line[(i + n - 1) % n];
        let right = line[(i + 1) % n];
        line[i] + half_r * (left - 2.0 * line[i] + right)
    }));
    solver.solve(scratch);
    line.copy_from_slice(scratch);
}

/// Time-stepping error of the slowest Fourier mode over the whole run,
/// measured against the exact decay of the spatially discretised mode.
fn decay_factor_error(mesh: usize, diffusivity: f64, t: f64, steps: usize) -> f64 {
    let h = 1.0 / mesh as f64;
    let dt = t / steps as f64;
    let lambda = diffusivity * (2.0 - 2.0 * (2.0 * PI * h).cos()) / (h * h);
    let g = (1.0 - 0.5 * lambda * dt) / (1.0 + 0.5 * lambda * dt);
    (g.powi(steps as i32) - (-lambda * t).exp()).abs()
}

/// Evolves `profile` by `du/dt = D laplacian(u)` for time `t` in `steps` Crank-Nicolson steps.
pub fn heat_solve(
    profile: &DensityProfile,
    diffusivity: f64,
    t: f64,
    steps: usize,
) -> Result<DensityProfile> {
    if !(diffusivity.is_finite() && diffusivity > 0.0) {
        return Err(Error::InvalidProfile(format!(
            "diffusivity must be positive, got {diffusivity}"
        )));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidHorizon(t));
    }
    if steps == 0 {
        return Err(Error::Resolution(
            "at least one time step is required".into(),
        ));
    }
    let mut out = profile.clone();
    out.diffusivity = Some(diffusivity);
    if t == 0.0 {
        return Ok(out);
    }
    let err = decay_factor_error(profile.mesh, diffusivity, t, steps);
    if err > RESOLUTION_TOL {
        return Err(Error::Resolution(format!(
            "mesh {} with {steps} steps misses the slowest mode's semi-discrete decay by {err:.2e}",
            profile.mesh
        )));
    }
    let m = profile.mesh;
    let h = 1.0 / m as f64;
    let dt = t / steps as f64;
    let r = diffusivity * dt / (h * h);
    let solver = CyclicSolver::new(m, 1.0 + r, -0.5 * r);
    let half_r = 0.5 * r;
    let mut scratch = Vec::with_capacity(m);
    let mut column = vec![0.0; m];
    for _ in 0..steps {
        match profile.dim {
            1 => cn_line(&mut out.values, half_r, &solver, &mut scratch),
            _ => {
                for row in out.values.chunks_mut(m) {
                    cn_line(row, half_r, &solver, &mut scratch);
                }
                for i in 0..m {
                    for j in 0..m {
                        column[j] = out.values[i + m * j];
                    }
                    cn_line(&mut column, half_r, &solver, &mut scratch);
                    for j in 0..m {
                        out.values[i + m * j] = column[j];
                    }
                }
            }
        }
    }
    if out.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(
            "heat solver produced non-finite values".into(),
        ));
    }
    Ok(out)
}

/// Smallest step count (256 or a doubling of it) meeting [`RESOLUTION_TOL`].
pub fn default_steps(mesh: usize, diffusivity: f64, t: f64) -> usize {
    let mut steps = 256;
    while steps < 1 << 20 && decay_factor_error(mesh, diffusivity, t, steps) > 0.1 * RESOLUTION_TOL
    {
        steps *= 2;
    }
    steps
}

/// Quenched effective diffusivity of a diffusively rescaled ring: the harmonic mean of its conductances.
pub fn effective_diffusivity_1d(g: &GraphInstance) -> Result<f64> {
    if !g.is_ring() {
        return Err(Error::UnsupportedTopology(
            "effective diffusivity needs a one-dimensional ring".into(),
        ));
    }
    let n = g.n() as f64;
    if g.time_scale() != n * n {
        return Err(Error::UnsupportedTopology(format!(
            "effective diffusivity needs time scaling n^2 = {}, got {}",
            n * n,
            g.time_scale()
        )));
    }
    harmonic_mean(g)
}

/// Effective diffusivity for the supported cases: rings, and constant fields on the 2-torus.
pub fn effective_diffusivity(g: &GraphInstance) -> Result<f64> {
    if g.dim() == 1 {
        return effective_diffusivity_1d(g);
    }
    let c = g.conductances()?;
    let n = g.n() as f64;
    if g.dim() == 2 && c.iter().all(|&x| x == c[0]) && g.time_scale() == n * n {
        return Ok(c[0]);
    }
    Err(Error::UnsupportedTopology(
        "only rings and constant-conductance 2-tori have a computed effective diffusivity".into(),
    ))
}

/// `P_t phi` of the limit process, sampled at the vertices of `g`.
///
/// Cosine modes and constants use their closed form; bumps are evolved with
/// [`heat_solve`] on a mesh of `4 n` points per axis.
pub fn limit_semigroup_on_vertices(
    g: &GraphInstance,
    phi: &TestFunction,
    t: f64,
    diffusivity: f64,
) -> Result<Vec<f64>> {
    if !(diffusivity.is_finite() && diffusivity > 0.0) {
        return Err(Error::InvalidProfile(format!(
            "diffusivity must be positive, got {diffusivity}"
        )));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidHorizon(t));
    }
    match phi {
        TestFunction::CosineMode { k } => {
            let decay = (-4.0 * PI * PI * squared_norm(k) * diffusivity * t).exp();
            Ok(g.sample(phi).into_iter().map(|v| decay * v).collect())
        }
        TestFunction::Constant { .. } => Ok(g.sample(phi)),
        TestFunction::Bump { .. } => limit_semigroup_pde(g, phi, t, diffusivity),
    }
}

/// The Crank-Nicolson route of [`limit_semigroup_on_vertices`], for any test function.
pub fn limit_semigroup_pde(
    g: &GraphInstance,
    phi: &TestFunction,
    t: f64,
    diffusivity: f64,
) -> Result<Vec<f64>> {
    let mesh = 4 * g.n();
    let initial = DensityProfile::from_fn(mesh, g.dim(), |x| phi.eval(x))?;
    let evolved = heat_solve(
        &initial,
        diffusivity,
        t,
        default_steps(mesh, diffusivity, t),
    )?;
    Ok((0..g.num_vertices())
        .map(|v| evolved.interpolate(g.position(v)))
        .collect())
}
