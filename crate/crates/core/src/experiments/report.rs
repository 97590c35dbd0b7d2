use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// One `(n, environment seed, test function)` measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub n: usize,
    /// Environment seed; `None` for records averaged over environments.
    pub seed: Option<u64>,
    pub phi: usize,
    pub stat: f64,
    pub se: f64,
    pub bound: f64,
    pub pass: bool,
    pub replicas: usize,
    #[serde(flatten)]
    pub extra: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    pub config_hash: String,
    pub code_version: String,
    pub base_seed: u64,
    pub env_seeds: Vec<u64>,
    pub records: Vec<Record>,
    pub checks: Vec<Check>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            config_hash: cfg.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            base_seed: cfg.seed,
            env_seeds: cfg.env_seeds.clone(),
            records: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn all_passed(&self) -> bool {
        self.records.iter().all(|r| r.pass) && self.checks.iter().all(|c| c.pass)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    /// Flat table: fixed columns then the union of extra columns, sorted.
    pub fn to_csv(&self) -> String {
        let extras: std::collections::BTreeSet<&String> =
            self.records.iter().flat_map(|r| r.extra.keys()).collect();
        let mut out = String::from("schema_version,n,seed,phi,stat,se,bound,pass,replicas");
        for k in &extras {
            out.push(',');
            out.push_str(k);
        }
        out.push('\n');
        for r in &self.records {
            let seed = r.seed.map(|s| s.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{SCHEMA_VERSION},{},{seed},{},{},{},{},{},{}",
                r.n, r.phi, r.stat, r.se, r.bound, r.pass, r.replicas
            ));
            for k in &extras {
                out.push(',');
                if let Some(v) = r.extra.get(*k) {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    /// Records with a concrete environment seed, grouped by `(seed, phi)` in n order.
    pub(crate) fn series(&self) -> BTreeMap<(u64, usize), Vec<&Record>> {
        let mut map: BTreeMap<(u64, usize), Vec<&Record>> = BTreeMap::new();
        for r in &self.records {
            if let Some(seed) = r.seed {
                map.entry((seed, r.phi)).or_default().push(r);
            }
        }
        map
    }
}
