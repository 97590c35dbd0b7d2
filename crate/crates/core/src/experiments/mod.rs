//! Replica experiments over graph sequences: the martingale-term bound, the
//! homogenization discrepancy, and the hydrodynamic deviation probability.

mod duality;
mod homogenize;
mod hydro;
pub mod report;
pub mod stats;

use std::collections::BTreeMap;

pub use duality::{duality_experiment, martingale_bound, z_statistic, z_statistic_with};
pub use homogenize::{hom_discrepancy, homogenization_experiment};
pub use hydro::{hydro_experiment, hydro_target, prof1_check};
pub use report::{Check, ExperimentReport, Record};

use crate::conductance::arithmetic_mean;
use crate::config::{Diffusivity, DiffusivityRule, ExperimentConfig};
use crate::error::Result;
use crate::graph::GraphInstance;
use crate::pde::effective_diffusivity;
use crate::seeding::{self, Stream};

/// Limit diffusivity used as the comparison for graph `g`.
pub fn resolve_diffusivity(rule: Diffusivity, g: &GraphInstance) -> Result<f64> {
    match rule {
        Diffusivity::Rule(DiffusivityRule::Harmonic) => effective_diffusivity(g),
        Diffusivity::Rule(DiffusivityRule::Arithmetic) => arithmetic_mean(g),
        Diffusivity::Fixed(d) => Ok(d),
    }
}

/// Seeds of the initial configuration and of the clocks for one replica.
pub fn replica_seeds(base: u64, n: usize, env_seed: u64, replica: usize) -> (u64, u64) {
    let coords = [n as u64, env_seed, replica as u64];
    (
        seeding::derive(base, Stream::InitialConfiguration, &coords),
        seeding::derive(base, Stream::Clocks, &coords),
    )
}

/// Appends environment-averaged records when the config asks for the annealed view.
fn add_annealed(
    report: &mut ExperimentReport,
    cfg: &ExperimentConfig,
    pass: impl Fn(f64, f64, f64) -> bool,
) {
    if !cfg.annealed || cfg.env_seeds.len() < 2 {
        return;
    }
    let mut groups: BTreeMap<(usize, usize), Vec<Record>> = BTreeMap::new();
    for r in &report.records {
        groups.entry((r.n, r.phi)).or_default().push(r.clone());
    }
    for ((n, phi), rs) in groups {
        let k = rs.len() as f64;
        let stat = rs.iter().map(|r| r.stat).sum::<f64>() / k;
        let se = rs.iter().map(|r| r.se * r.se).sum::<f64>().sqrt() / k;
        let bound = rs.iter().map(|r| r.bound).sum::<f64>() / k;
        report.records.push(Record {
            n,
            seed: None,
            phi,
            stat,
            se,
            bound,
            pass: pass(stat, se, bound),
            replicas: rs.iter().map(|r| r.replicas).sum(),
            extra: BTreeMap::new(),
        });
    }
}
