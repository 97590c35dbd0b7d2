//! Finite graphs embedded in the unit torus, their scaling constants, and the
//! catalog of test functions used to probe empirical measures.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the mass scaling `a_n` and time scaling `b_n` are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scaling {
    /// `a_n = |V_n|`, `b_n = n^2` for side length `n`.
    Diffusive,
    Custom {
        mass: f64,
        time: f64,
    },
}

/// A finite graph with vertices on the `d`-dimensional unit torus.
///
/// Edges are stored as unordered pairs `(u, v)` with `u < v`, sorted
/// lexicographically; the position of an edge in that order is its rank.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInstance {
    n: usize,
    dim: usize,
    positions: Vec<f64>,
    edges: Vec<(usize, usize)>,
    anchors: Vec<usize>,
    conductance: Option<Vec<f64>>,
    mass_scale: f64,
    time_scale: f64,
}

impl GraphInstance {
    /// Builds a graph from raw parts, canonicalising the edge list.
    ///
    /// `edges` holds `(anchor, other)` pairs as produced by a construction
    /// sweep; the anchor is the vertex the edge was drawn from and is kept
    /// for pattern-indexed conductance fields. Repeated unordered pairs are
    /// merged, keeping the first anchor seen.
    pub fn from_parts(
        n: usize,
        dim: usize,
        positions: Vec<f64>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        mass_scale: f64,
        time_scale: f64,
    ) -> Result<Self> {
        if dim == 0 || positions.len() % dim != 0 {
            return Err(Error::InvalidSize(format!(
                "{} coordinates do not split into points of dimension {dim}",
                positions.len()
            )));
        }
        let nv = positions.len() / dim;
        if positions.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::InvalidSize(
                "vertex coordinates must lie in [0, 1)".into(),
            ));
        }
        for (name, s) in [("mass", mass_scale), ("time", time_scale)] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidSize(format!(
                    "{name} scaling must be positive, got {s}"
                )));
            }
        }
        let mut keyed: Vec<((usize, usize), usize, usize)> = Vec::new();
        for (order, (a, b)) in edges.into_iter().enumerate() {
            if a >= nv || b >= nv {
                return Err(Error::InvalidSize(format!(
                    "edge ({a}, {b}) references a missing vertex"
                )));
            }
            if a == b {
                return Err(Error::InvalidSize(format!("self-loop at vertex {a}")));
            }
            keyed.push(((a.min(b), a.max(b)), order, a));
        }
        keyed.sort_unstable();
        keyed.dedup_by_key(|(pair, _, _)| *pair);
        let (edges, anchors) = keyed
            .into_iter()
            .map(|(pair, _, anchor)| (pair, anchor))
            .unzip();
        Ok(Self {
            n,
            dim,
            positions,
            edges,
            anchors,
            conductance: None,
            mass_scale,
            time_scale,
        })
    }

    /// Sequence index (the side length for torus grids).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn position(&self, v: usize) -> &[f64] {
        &self.positions[v * self.dim..(v + 1) * self.dim]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Vertex an edge was drawn from during construction.
    pub fn anchor(&self, rank: usize) -> usize {
        self.anchors[rank]
    }

    /// `a_n`.
    pub fn mass_scale(&self) -> f64 {
        self.mass_scale
    }

    /// `b_n`.
    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn conductances(&self) -> Result<&[f64]> {
        self.conductance
            .as_deref()
            .ok_or(Error::MissingConductances)
    }

    pub fn has_conductances(&self) -> bool {
        self.conductance.is_some()
    }

    /// Returns a copy of the graph carrying the given per-edge conductances.
    pub fn with_conductances(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.edges.len() {
            return Err(Error::InvalidField(format!(
                "{} conductances for {} edges",
                values.len(),
                self.edges.len()
            )));
        }
        if let Some((rank, c)) = values
            .iter()
            .enumerate()
            .find(|(_, c)| !(c.is_finite() && **c > 0.0))
        {
            return Err(Error::InvalidField(format!(
                "edge {rank} has non-positive conductance {c}"
            )));
        }
        Ok(Self {
            conductance: Some(values),
            ..self.clone()
        })
    }

    /// True for one-dimensional nearest-neighbour rings built by [`build_torus_1d`].
    pub fn is_ring(&self) -> bool {
        let nv = self.num_vertices();
        self.dim == 1
            && nv >= 2
            && self.edges.len() == if nv == 2 { 1 } else { nv }
            && self
                .edges
                .iter()
                .all(|&(u, v)| v == u + 1 || (u == 0 && v == nv - 1))
    }

    /// Values of `phi` at every vertex position.
    pub fn sample(&self, phi: &TestFunction) -> Vec<f64> {
        (0..self.num_vertices())
            .map(|v| phi.eval(self.position(v)))
            .collect()
    }
}

fn check_side(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidSize(format!(
            "side length must be at least 2, got {n}"
        )));
    }
    Ok(())
}

/// Ring with `n` vertices at `i/n` and nearest-neighbour edges.
pub fn build_torus_1d(n: usize, scaling: Scaling) -> Result<GraphInstance> {
    check_side(n)?;
    let (mass, time) = match scaling {
        Scaling::Diffusive => (n as f64, (n * n) as f64),
        Scaling::Custom { mass, time } => (mass, time),
    };
    let positions = (0..n).map(|i| i as f64 / n as f64).collect();
    GraphInstance::from_parts(
        n,
        1,
        positions,
        (0..n).map(|i| (i, (i + 1) % n)),
        mass,
        time,
    )
}

/// `n x n` grid on the unit 2-torus; vertex `i + n*j` sits at `(i/n, j/n)`.
pub fn build_torus_2d(n: usize, scaling: Scaling) -> Result<GraphInstance> {
    check_side(n)?;
    let (mass, time) = match scaling {
        Scaling::Diffusive => ((n * n) as f64, (n * n) as f64),
        Scaling::Custom { mass, time } => (mass, time),
    };
    let mut positions = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            positions.push(i as f64 / n as f64);
            positions.push(j as f64 / n as f64);
        }
    }
    let id = |i: usize, j: usize| i + n * j;
    let edges = (0..n).flat_map(move |j| {
        (0..n).flat_map(move |i| {
            [
                (id(i, j), id((i + 1) % n, j)),
                (id(i, j), id(i, (j + 1) % n)),
            ]
        })
    });
    GraphInstance::from_parts(n, 2, positions, edges, mass, time)
}

/// Closed-form test functions on the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum TestFunction {
    /// `cos(2 pi <k, x>)`.
    CosineMode {
        k: Vec<i64>,
    },
    /// Smooth bump `exp(1 - 1/(1 - (d/r)^2))` in torus distance `d`, peak value 1.
    Bump {
        center: Vec<f64>,
        radius: f64,
    },
    Constant {
        value: f64,
    },
}

impl TestFunction {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            TestFunction::CosineMode { k } if k.len() > dim => Err(Error::InvalidProfile(format!(
                "cosine mode has {} wave numbers for a {dim}-dimensional torus",
                k.len()
            ))),
            TestFunction::Bump { center, radius } => {
                if center.len() != dim || center.iter().any(|c| !(0.0..1.0).contains(c)) {
                    return Err(Error::InvalidProfile(format!(
                        "bump center must be a point of the {dim}-torus with coordinates in [0, 1)"
                    )));
                }
                if !(*radius > 0.0 && *radius < 0.5) {
                    return Err(Error::InvalidProfile(format!(
                        "bump radius must lie in (0, 0.5), got {radius}"
                    )));
                }
                Ok(())
            }
            TestFunction::Constant { value } if !value.is_finite() => {
                Err(Error::InvalidProfile("constant must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::CosineMode { k } => {
                let phase: f64 = k.iter().zip(x).map(|(&ki, &xi)| ki as f64 * xi).sum();
                (2.0 * PI * phase).cos()
            }
            TestFunction::Bump { center, radius } => {
                let d2: f64 = center
                    .iter()
                    .zip(x)
                    .map(|(c, xi)| {
                        let d = (xi - c).rem_euclid(1.0);
                        d.min(1.0 - d).powi(2)
                    })
                    .sum();
                bump_profile(d2.sqrt() / radius)
            }
            TestFunction::Constant { value } => *value,
        }
    }

    /// `sup |phi|`.
    pub fn sup_norm(&self) -> f64 {
        match self {
            TestFunction::CosineMode { .. } | TestFunction::Bump { .. } => 1.0,
            TestFunction::Constant { value } => value.abs(),
        }
    }

    /// Lebesgue integral over the `dim`-torus.
    pub fn integral(&self, dim: usize) -> f64 {
        match self {
            TestFunction::CosineMode { k } => {
                if k.iter().all(|&ki| ki == 0) {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::Constant { value } => *value,
            TestFunction::Bump { radius, .. } => match dim {
                1 => 2.0 * radius * simpson(|s| bump_profile(s), 0.0, 1.0, 20_000),
                2 => {
                    2.0 * PI * radius * radius * simpson(|s| bump_profile(s) * s, 0.0, 1.0, 20_000)
                }
                _ => {
                    let surface = 2.0 * PI.powf(dim as f64 / 2.0) / gamma_half_integer(dim);
                    surface
                        * radius.powi(dim as i32)
                        * simpson(
                            |s| bump_profile(s) * s.powi(dim as i32 - 1),
                            0.0,
                            1.0,
                            20_000,
                        )
                }
            },
        }
    }
}

fn bump_profile(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// `Gamma(d/2)` for a positive integer `d`.
fn gamma_half_integer(d: usize) -> f64 {
    let mut g = if d % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut x = if d % 2 == 0 { 1.0 } else { 0.5 };
    while x < d as f64 / 2.0 {
        g *= x;
        x += 1.0;
    }
    g
}

pub(crate) fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let m = panels + panels % 2;
    let h = (b - a) / m as f64;
    let inner: f64 = (1..m)
        .map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h))
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

/// `(1/a_n) sum_x phi(pos x) values(x)`.
pub fn empirical_integral(g: &GraphInstance, phi: &TestFunction, values: &[f64]) -> f64 {
    assert_eq!(values.len(), g.num_vertices(), "one value per vertex");
    let s: f64 = (0..g.num_vertices())
        .map(|v| phi.eval(g.position(v)) * values[v])
        .sum();
    s / g.mass_scale()
}

/// `m_n(phi)`.
pub fn empirical_measure(g: &GraphInstance, phi: &TestFunction) -> f64 {
    g.sample(phi).iter().sum::<f64>() / g.mass_scale()
}

/// `|m_n(phi) - int phi dm|` with `m` the Lebesgue measure on the torus.
pub fn vague_discrepancy(g: &GraphInstance, phi: &TestFunction) -> f64 {
    (empirical_measure(g, phi) - phi.integral(g.dim())).abs()
}
