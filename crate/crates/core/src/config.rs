//! Experiment configuration: a TOML document validated against the model
//! invariants, with every default materialised in the resolved value.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::conductance::{ConductanceField, FieldKind};
use crate::graph::{build_torus_1d, build_torus_2d, GraphInstance, Scaling, TestFunction};
use crate::pde::InitialProfile;

/// Keys every configuration file must set.
pub const REQUIRED_KEYS: [&str; 3] = ["graph", "field", "t"];

/// Defaults, as listed by `--help`.
pub const DEFAULTS_HELP: &str = "\
Required keys: graph.n (strictly increasing side lengths), field.kind, t.
Defaults:
  graph.dimension = 1
  test_functions  = [{ kind = \"cosine_mode\", k = [1] }]
  initial_profile = { kind = \"constant\", value = 0.5 }
  replicas        = 200
  env_seeds       = [1]
  tolerance       = 0.05    (deviation threshold delta)
  max_exceedance  = 0.05    (allowed exceedance probability at the largest n)
  seed            = 20240601
  diffusivity     = \"harmonic\"  (or \"arithmetic\", or a number)
  annealed        = false
  numerics.semigroup_tol = 1e-10, numerics.mesh = 256, numerics.steps = 256
  simulate.sample_times = [0, t/2, t], simulate.epsilon = 1/b_n
  kernel.times = [t], pde.times = [0, t]";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing required keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),
    #[error("{}{path}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        path: String,
        line: Option<usize>,
        message: String,
    },
    #[error("manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusivityRule {
    Harmonic,
    Arithmetic,
}

/// Diffusivity of the limit process used for comparison values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Diffusivity {
    Rule(DiffusivityRule),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default = "default_semigroup_tol")]
    pub semigroup_tol: f64,
    #[serde(default = "default_mesh")]
    pub mesh: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    #[serde(default)]
    pub sample_times: Vec<f64>,
    /// Component-statistics window; `1/b_n` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TimesSpec {
    #[serde(default)]
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    pub field: FieldKind,
    pub t: f64,
    #[serde(default = "default_test_functions")]
    pub test_functions: Vec<TestFunction>,
    #[serde(default = "default_initial_profile")]
    pub initial_profile: InitialProfile,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_env_seeds")]
    pub env_seeds: Vec<u64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_exceedance")]
    pub max_exceedance: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_diffusivity")]
    pub diffusivity: Diffusivity,
    #[serde(default)]
    pub annealed: bool,
    #[serde(default = "default_numerics")]
    pub numerics: Numerics,
    #[serde(default)]
    pub simulate: SimulateSpec,
    #[serde(default)]
    pub kernel: TimesSpec,
    #[serde(default)]
    pub pde: TimesSpec,
}

fn default_dimension() -> usize {
    1
}
fn default_test_functions() -> Vec<TestFunction> {
    vec![TestFunction::CosineMode { k: vec![1] }]
}
fn default_initial_profile() -> InitialProfile {
    InitialProfile::Constant { value: 0.5 }
}
fn default_replicas() -> usize {
    200
}
fn default_env_seeds() -> Vec<u64> {
    vec![1]
}
fn default_tolerance() -> f64 {
    0.05
}
fn default_max_exceedance() -> f64 {
    0.05
}
fn default_seed() -> u64 {
    20240601
}
fn default_diffusivity() -> Diffusivity {
    Diffusivity::Rule(DiffusivityRule::Harmonic)
}
fn default_semigroup_tol() -> f64 {
    1e-10
}
fn default_mesh() -> usize {
    256
}
fn default_steps() -> usize {
    256
}
fn default_numerics() -> Numerics {
    Numerics {
        semigroup_tol: default_semigroup_tol(),
        mesh: default_mesh(),
        steps: default_steps(),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `path` (dotted) in `text`: the `key =` line inside the matching table.
fn locate(text: &str, path: &str) -> Option<usize> {
    let (table, key) = match path.split('.').next_back() {
        Some(key) if key != path => (&path[..path.len() - key.len() - 1], key),
        _ => ("", path),
    };
    let table = table.split('[').next().unwrap_or("");
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            current = trimmed
                .trim_matches(|c| c == '[' || c == ']')
                .trim()
                .to_string();
            continue;
        }
        let Some((lhs, _)) = trimmed.split_once('=') else {
            continue;
        };
        let lhs = lhs.trim();
        if current == table && lhs == key {
            return Some(i + 1);
        }
        if current.is_empty()
            && !table.is_empty()
            && (lhs == table || lhs == format!("{table}.{key}"))
        {
            return Some(i + 1);
        }
    }
    None
}

/// Dotted path of the key on `line`, for errors reported by position only.
fn path_at(text: &str, line: usize) -> Option<String> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if trimmed.starts_with('[') {
            current = trimmed
                .trim_matches(|c| c == '[' || c == ']')
                .trim()
                .to_string();
        }
        if i + 1 == line {
            let key = trimmed.split_once('=').map(|(k, _)| k.trim().to_string());
            return Some(match key {
                Some(k) if current.is_empty() => k,
                Some(k) => format!("{current}.{k}"),
                None => current,
            });
        }
    }
    None
}

impl ExperimentConfig {
    /// Graph of side `n` with the quenched field of `env_seed` assigned.
    pub fn build_graph(&self, n: usize, env_seed: u64) -> crate::Result<GraphInstance> {
        let bare = match self.graph.dimension {
            1 => build_torus_1d(n, Scaling::Diffusive)?,
            _ => build_torus_2d(n, Scaling::Diffusive)?,
        };
        ConductanceField::new(self.field.clone(), env_seed).assign(&bare)
    }

    pub fn sample_times(&self) -> Vec<f64> {
        if self.simulate.sample_times.is_empty() {
            vec![0.0, 0.5 * self.t, self.t]
        } else {
            self.simulate.sample_times.clone()
        }
    }

    pub fn kernel_times(&self) -> Vec<f64> {
        if self.kernel.times.is_empty() {
            vec![self.t]
        } else {
            self.kernel.times.clone()
        }
    }

    pub fn pde_times(&self) -> Vec<f64> {
        if self.pde.times.is_empty() {
            vec![0.0, self.t]
        } else {
            self.pde.times.clone()
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Checks every field against the model invariants.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let fail = |path: &str, msg: String| Err((path.to_string(), msg));
        if !(1..=2).contains(&self.graph.dimension) {
            return fail(
                "graph.dimension",
                format!("must be 1 or 2, got {}", self.graph.dimension),
            );
        }
        if self.graph.n.is_empty() {
            return fail("graph.n", "n-list must not be empty".into());
        }
        if self.graph.n.iter().any(|&n| n < 2) {
            return fail("graph.n", "every n must be at least 2".into());
        }
        if self.graph.n.windows(2).any(|w| w[0] >= w[1]) {
            return fail("graph.n", "n-list must be strictly increasing".into());
        }
        if let Err(e) = ConductanceField::new(self.field.clone(), 0).validate() {
            return fail("field", e.to_string());
        }
        if !(self.t.is_finite() && self.t > 0.0) {
            return fail("t", format!("must be positive, got {}", self.t));
        }
        if self.test_functions.is_empty() {
            return fail(
                "test_functions",
                "at least one test function is required".into(),
            );
        }
        for phi in &self.test_functions {
            if let Err(e) = phi.validate(self.graph.dimension) {
                return fail("test_functions", e.to_string());
            }
        }
        if let Err(e) = self.initial_profile.validate(self.graph.dimension) {
            return fail("initial_profile", e.to_string());
        }
        if self.replicas < 2 {
            return fail(
                "replicas",
                format!("need at least 2 replicas, got {}", self.replicas),
            );
        }
        if self.env_seeds.is_empty() {
            return fail(
                "env_seeds",
                "at least one environment seed is required".into(),
            );
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return fail(
                "tolerance",
                format!("must be positive, got {}", self.tolerance),
            );
        }
        if !(self.max_exceedance > 0.0 && self.max_exceedance <= 1.0) {
            return fail(
                "max_exceedance",
                format!("must lie in (0, 1], got {}", self.max_exceedance),
            );
        }
        if let Diffusivity::Fixed(d) = self.diffusivity {
            if !(d.is_finite() && d > 0.0) {
                return fail("diffusivity", format!("must be positive, got {d}"));
            }
        }
        if !(self.numerics.semigroup_tol > 0.0) {
            return fail("numerics.semigroup_tol", "must be positive".into());
        }
        if self.numerics.mesh < 4 {
            return fail("numerics.mesh", "mesh must have at least 4 points".into());
        }
        if self.numerics.steps == 0 {
            return fail("numerics.steps", "must be at least 1".into());
        }
        for (path, times) in [
            ("simulate.sample_times", &self.simulate.sample_times),
            ("kernel.times", &self.kernel.times),
            ("pde.times", &self.pde.times),
        ] {
            if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return fail(path, "times must be non-negative".into());
            }
            if times.windows(2).any(|w| w[0] > w[1]) {
                return fail(path, "times must be ascending".into());
            }
        }
        if let Some(eps) = self.simulate.epsilon {
            if !(eps > 0.0) {
                return fail("simulate.epsilon", "must be positive".into());
            }
        }
        Ok(())
    }
}

/// Parses and validates a TOML experiment configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
        message: e.message().to_string(),
    })?;
    let missing: Vec<String> = REQUIRED_KEYS
        .iter()
        .filter(|k| !table.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(ConfigError::MissingKeys(missing));
    }
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        ConfigError::Invalid {
            path: line.and_then(|l| path_at(text, l)).unwrap_or_default(),
            line,
            message: e.message().to_string(),
        }
    })?;
    cfg.validate()
        .map_err(|(path, message)| ConfigError::Invalid {
            line: locate(text, &path),
            path,
            message,
        })?;
    Ok(cfg)
}

/// Recovers the resolved configuration stored in a run manifest.
pub fn config_from_manifest(json: &str) -> Result<ExperimentConfig, ConfigError> {
    let value: serde_json::Value =
        serde_json::from_str(json).map_err(|e| ConfigError::Manifest(e.to_string()))?;
    let resolved = value
        .get("resolved_config")
        .ok_or_else(|| ConfigError::Manifest("no resolved_config entry".into()))?;
    let cfg: ExperimentConfig = serde_json::from_value(resolved.clone())
        .map_err(|e| ConfigError::Manifest(e.to_string()))?;
    cfg.validate()
        .map_err(|(path, message)| ConfigError::Invalid {
            path,
            line: None,
            message,
        })?;
    Ok(cfg)
}

/// Accepts either a TOML configuration or a JSON run manifest.
pub fn load_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    if text.trim_start().starts_with('{') {
        config_from_manifest(text)
    } else {
        parse_config(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        "t = 0.05\n\n[graph]\nn = [64]\n\n[field]\nkind = \"constant\"\nvalue = 1.0\n";

    #[test]
    fn empty_file_lists_required_keys() {
        let err = parse_config("").unwrap_err();
        assert_eq!(
            err,
            ConfigError::MissingKeys(vec!["graph".into(), "field".into(), "t".into()])
        );
        assert!(err.to_string().contains("graph, field, t"));
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(
            cfg.graph,
            GraphSpec {
                dimension: 1,
                n: vec![64]
            }
        );
        assert_eq!(cfg.field, FieldKind::Constant { value: 1.0 });
        assert_eq!(cfg.replicas, 200);
        assert_eq!(cfg.tolerance, 0.05);
        assert_eq!(
            cfg.diffusivity,
            Diffusivity::Rule(DiffusivityRule::Harmonic)
        );
        assert_eq!(cfg.test_functions, default_test_functions());
        assert_eq!(cfg.sample_times(), vec![0.0, 0.025, 0.05]);
    }

    #[test]
    fn decreasing_n_list_is_rejected() {
        let text = MINIMAL.replace("n = [64]", "n = [64, 32]");
        let err = parse_config(&text).unwrap_err();
        match &err {
            ConfigError::Invalid {
                path,
                line,
                message,
            } => {
                assert_eq!(path, "graph.n");
                assert_eq!(*line, Some(4));
                assert_eq!(message, "n-list must be strictly increasing");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err
            .to_string()
            .contains("n-list must be strictly increasing"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let text = MINIMAL.replace("n = [64]", "n = [64]\ncolour = \"red\"");
        let err = parse_config(&text).unwrap_err();
        match err {
            ConfigError::Invalid {
                path,
                line,
                message,
            } => {
                assert_eq!(line, Some(5));
                assert_eq!(path, "graph.colour");
                assert!(message.contains("colour"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = format!("bogus = 1\n{MINIMAL}");
        assert!(matches!(
            parse_config(&text),
            Err(ConfigError::Invalid { line: Some(1), .. })
        ));
    }

    #[test]
    fn type_mismatch_is_reported() {
        let text = MINIMAL.replace("t = 0.05", "t = \"soon\"");
        assert!(matches!(
            parse_config(&text),
            Err(ConfigError::Invalid { line: Some(1), .. })
        ));
    }

    #[test]
    fn invariant_violations() {
        for (from, to, path) in [
            ("t = 0.05", "t = 0.0", "t"),
            ("n = [64]", "n = [1, 4]", "graph.n"),
            ("value = 1.0", "value = -1.0", "field"),
            ("t = 0.05", "t = 0.05\nreplicas = 1", "replicas"),
            ("t = 0.05", "t = 0.05\ntolerance = 0", "tolerance"),
            ("t = 0.05", "t = 0.05\nenv_seeds = []", "env_seeds"),
        ] {
            let text = MINIMAL.replace(from, to);
            match parse_config(&text) {
                Err(ConfigError::Invalid { path: p, .. }) => assert_eq!(p, path, "{to}"),
                other => panic!("{to}: {other:?}"),
            }
        }
    }

    #[test]
    fn full_config_round_trips_through_manifest() {
        let text = r#"
t = 0.05
replicas = 50
env_seeds = [3, 4]
diffusivity = "arithmetic"
seed = 9

[graph]
n = [16, 32]

[field]
kind = "periodic"
pattern = [1.0, 4.0]

[[test_functions]]
kind = "cosine_mode"
k = [1]

[[test_functions]]
kind = "bump"
center = [0.5]
radius = 0.2

[initial_profile]
kind = "cosine"
mean = 0.5
amplitude = 0.5
k = [1]

[numerics]
mesh = 128
"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(
            cfg.diffusivity,
            Diffusivity::Rule(DiffusivityRule::Arithmetic)
        );
        assert_eq!(cfg.numerics.mesh, 128);
        assert_eq!(cfg.numerics.steps, 256);
        let manifest = serde_json::json!({ "resolved_config": cfg }).to_string();
        let back = load_config(&manifest).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let fixed =
            parse_config(&MINIMAL.replace("t = 0.05", "t = 0.05\ndiffusivity = 1.5")).unwrap();
        assert_eq!(fixed.diffusivity, Diffusivity::Fixed(1.5));
    }

    #[test]
    fn build_graph_assigns_the_environment() {
        let cfg = parse_config(MINIMAL).unwrap();
        let g = cfg.build_graph(64, 1).unwrap();
        assert_eq!(g.num_vertices(), 64);
        assert!(g.has_conductances());
    }
}
