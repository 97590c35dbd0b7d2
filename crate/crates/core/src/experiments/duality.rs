use std::collections::BTreeMap;

use rayon::prelude::*;

use super::report::{ExperimentReport, Record};
use super::stats::mean_se;
use super::{add_annealed, replica_seeds};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::graph::{GraphInstance, TestFunction};
use crate::harris::{evolve_exclusion, sample_product_measure, ClockSampler, EventLog, Occupancy};
use crate::kernel::semigroup_apply;

/// `Z_n = (1/a_n) sum_x phi(x) eta_x(t) - (1/a_n) sum_x eta_x(0) P_t^n phi(x)`.
pub fn z_statistic(
    g: &GraphInstance,
    phi: &TestFunction,
    eta0: &Occupancy,
    log: &EventLog,
    t: f64,
    tol: f64,
) -> Result<f64> {
    let phi_values = g.sample(phi);
    let evolved_phi = semigroup_apply(g, &phi_values, t, tol)?;
    let eta_t = evolve_exclusion(eta0, log, t)?;
    Ok(z_statistic_with(g, &phi_values, &evolved_phi, eta0, &eta_t))
}

/// [`z_statistic`] from precomputed `phi` and `P_t^n phi` vertex values.
pub fn z_statistic_with(
    g: &GraphInstance,
    phi_values: &[f64],
    evolved_phi: &[f64],
    eta0: &Occupancy,
    eta_t: &Occupancy,
) -> f64 {
    let now: f64 = eta_t.particles().map(|x| phi_values[x]).sum();
    let then: f64 = eta0.particles().map(|x| evolved_phi[x]).sum();
    (now - then) / g.mass_scale()
}

/// `m_n(phi^2) / (2 a_n)`, the bound on `E[Z_n^2]`.
pub fn martingale_bound(g: &GraphInstance, phi_values: &[f64]) -> f64 {
    let a = g.mass_scale();
    phi_values.iter().map(|v| v * v).sum::<f64>() / (2.0 * a * a)
}

/// Estimates `E[Z_n^2]` per `n` and compares it with `m_n(phi^2) / (2 a_n)`.
pub fn duality_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("duality", cfg);
    let rho0 = &cfg.initial_profile;
    for &env_seed in &cfg.env_seeds {
        for &n in &cfg.graph.n {
            let g = cfg.build_graph(n, env_seed)?;
            let sampler = ClockSampler::new(&g)?;
            for (phi_index, phi) in cfg.test_functions.iter().enumerate() {
                let phi_values = g.sample(phi);
                let evolved = semigroup_apply(&g, &phi_values, cfg.t, cfg.numerics.semigroup_tol)?;
                let a = g.mass_scale();
                let m_phi2 = phi_values.iter().map(|v| v * v).sum::<f64>() / a;
                let m_pt2 = evolved.iter().map(|v| v * v).sum::<f64>() / a;
                let bound = martingale_bound(&g, &phi_values);
                let z: Vec<f64> = (0..cfg.replicas)
                    .into_par_iter()
                    .map(|r| {
                        let (init_seed, clock_seed) = replica_seeds(cfg.seed, n, env_seed, r);
                        let eta0 = sample_product_measure(&g, |x| rho0.eval(x), init_seed)?;
                        let eta_t = sampler.evolve_exclusion(&eta0, clock_seed, cfg.t);
                        Ok(z_statistic_with(&g, &phi_values, &evolved, &eta0, &eta_t))
                    })
                    .collect::<Result<_>>()?;
                let z2: Vec<f64> = z.iter().map(|v| v * v).collect();
                let (estimate, se) = mean_se(&z2);
                let (mean_z, se_z) = mean_se(&z);
                let extra = BTreeMap::from([
                    ("mean_z".to_string(), mean_z),
                    ("se_z".to_string(), se_z),
                    (
                        "dissipation_bound".to_string(),
                        (m_phi2 - m_pt2) / (2.0 * a),
                    ),
                ]);
                report.records.push(Record {
                    n,
                    seed: Some(env_seed),
                    phi: phi_index,
                    stat: estimate,
                    se,
                    bound,
                    pass: estimate <= bound + 3.0 * se,
                    replicas: cfg.replicas,
                    extra,
                });
            }
        }
    }

    let mut decay = Vec::new();
    let mut zero_mean = Vec::new();
    for ((seed, phi), series) in report.series() {
        for r in &series {
            let (m, s) = (r.extra["mean_z"], r.extra["se_z"]);
            zero_mean.push((seed, phi, r.n, m.abs() <= 3.0 * s));
        }
        for w in series.windows(2) {
            if w[1].n == 2 * w[0].n {
                let ratio = w[0].stat / w[1].stat;
                decay.push((seed, phi, w[1].n, ratio));
            }
        }
    }
    for (seed, phi, n, ok) in zero_mean {
        report.check(
            format!("zero_mean/seed={seed}/phi={phi}/n={n}"),
            ok,
            "E[Z_n] = 0 within 3 SE",
        );
    }
    for (seed, phi, n, ratio) in decay {
        report.check(
            format!("decay_per_doubling/seed={seed}/phi={phi}/n={n}"),
            (1.5..=3.0).contains(&ratio),
            format!(
                "E[Z^2] ratio {ratio:.4} across the doubling to n={n}, expected within [1.5, 3]"
            ),
        );
        if let Some(r) = report
            .records
            .iter_mut()
            .find(|r| r.seed == Some(seed) && r.phi == phi && r.n == n)
        {
            r.extra.insert("decay_ratio".into(), ratio);
        }
    }
    add_annealed(&mut report, cfg, |stat, se, bound| stat <= bound + 3.0 * se);
    Ok(report)
}
