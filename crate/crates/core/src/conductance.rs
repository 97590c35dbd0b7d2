//! Quenched conductance environments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphInstance;
use crate::seeding::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum FieldKind {
    Constant {
        value: f64,
    },
    /// Edge drawn from vertex `i` gets `pattern[i % pattern.len()]`.
    Periodic {
        pattern: Vec<f64>,
    },
    IidUniform {
        lo: f64,
        hi: f64,
    },
    /// Pareto law with tail `P(c > s) = (scale/s)^exponent` for `s >= scale`.
    IidPareto {
        exponent: f64,
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductanceField {
    pub kind: FieldKind,
    pub seed: u64,
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidField(format!(
            "{name} must be positive and finite, got {x}"
        )))
    }
}

impl ConductanceField {
    pub fn new(kind: FieldKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(FieldKind::Constant { value }, 0)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            FieldKind::Constant { value } => positive("constant conductance", *value),
            FieldKind::Periodic { pattern } => {
                if pattern.is_empty() {
                    return Err(Error::InvalidField("periodic pattern is empty".into()));
                }
                pattern
                    .iter()
                    .try_for_each(|&c| positive("pattern entry", c))
            }
            FieldKind::IidUniform { lo, hi } => {
                positive("lo", *lo)?;
                positive("hi", *hi)?;
                if lo > hi {
                    return Err(Error::InvalidField(format!("lo {lo} exceeds hi {hi}")));
                }
                Ok(())
            }
            FieldKind::IidPareto { exponent, scale } => {
                positive("exponent", *exponent)?;
                positive("scale", *scale)
            }
        }
    }

    /// Conductance of the edge with the given rank and anchor vertex.
    pub fn value(&self, rank: usize, anchor: usize) -> f64 {
        let u = || seeding::derive(self.seed, Stream::Conductance, &[rank as u64]);
        match &self.kind {
            FieldKind::Constant { value } => *value,
            FieldKind::Periodic { pattern } => pattern[anchor % pattern.len()],
            FieldKind::IidUniform { lo, hi } => lo + (hi - lo) * seeding::unit_f64(u()),
            FieldKind::IidPareto { exponent, scale } => {
                scale * seeding::open_unit_f64(u()).powf(-1.0 / exponent)
            }
        }
    }

    /// Fills in `c_n(b)` for every edge of `g`.
    pub fn assign(&self, g: &GraphInstance) -> Result<GraphInstance> {
        self.validate()?;
        let values: Vec<f64> = (0..g.edges().len())
            .map(|rank| self.value(rank, g.anchor(rank)))
            .collect();
        if let Some(c) = values.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::InvalidField(format!(
                "sampled non-positive conductance {c}"
            )));
        }
        g.with_conductances(values)
    }
}

/// `((1/|E|) sum_b 1/c(b))^-1`.
pub fn harmonic_mean(g: &GraphInstance) -> Result<f64> {
    let c = g.conductances()?;
    let inv: f64 = c.iter().map(|c| 1.0 / c).sum();
    Ok(c.len() as f64 / inv)
}

pub fn arithmetic_mean(g: &GraphInstance) -> Result<f64> {
    let c = g.conductances()?;
    Ok(c.iter().sum::<f64>() / c.len() as f64)
}
