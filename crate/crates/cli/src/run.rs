use std::error::Error;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use exclusim::config::{load_config, ExperimentConfig};
use exclusim::experiments::report::SCHEMA_VERSION;
use exclusim::experiments::{
    duality_experiment, homogenization_experiment, hydro_experiment, replica_seeds,
    resolve_diffusivity, ExperimentReport,
};
use exclusim::harris::{
    component_statistics, exclusion_trajectory, sample_product_measure, ClockSampler,
};
use exclusim::kernel::transition_matrix;
use exclusim::pde::{heat_solve, DensityProfile};
use exclusim::GraphInstance;
use serde::Serialize;
use serde_json::json;

use crate::Command;

type Res<T> = Result<T, Box<dyn Error + Send + Sync>>;

/// Used when no `--config` is given.
pub const DEFAULT_CONFIG: &str = "\
t = 0.05
replicas = 400

[graph]
n = [32, 64, 128]

[field]
kind = \"constant\"
value = 1.0
";

/// Largest acceptable kernel asymmetry or row-sum defect.
const KERNEL_TOL: f64 = 1e-9;

pub struct Options {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub json: bool,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    schema_version: u32,
    config_path: Option<String>,
    resolved_config: &'a ExperimentConfig,
    base_seed: u64,
    out_dir: String,
    subcommand: &'a str,
    timestamp_unix: u64,
}

/// Files of one run, kept in memory until everything has been computed.
struct Outputs(Vec<(PathBuf, String)>);

impl Outputs {
    fn add(&mut self, path: impl Into<PathBuf>, body: String) {
        self.0.push((path.into(), body));
    }
}

fn resolve(opts: &Options) -> Res<ExperimentConfig> {
    let text = match &opts.config {
        Some(p) => fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => DEFAULT_CONFIG.to_string(),
    };
    let mut cfg = load_config(&text)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Runs one subcommand; `Ok(false)` means some pass flag came out false.
pub fn run(opts: &Options) -> Res<bool> {
    let cfg = resolve(opts)?;
    let mut outputs = Outputs(Vec::new());
    let passed = match opts.command {
        Command::GenGraph => gen_graph(&cfg, &mut outputs)?,
        Command::Simulate => simulate(&cfg, &mut outputs)?,
        Command::Kernel => kernel(&cfg, &mut outputs)?,
        Command::Pde => pde(&cfg, &mut outputs)?,
        Command::Duality => experiment(duality_experiment(&cfg)?, opts, &mut outputs),
        Command::Homogenize => experiment(homogenization_experiment(&cfg)?, opts, &mut outputs),
        Command::Hydro => experiment(hydro_experiment(&cfg)?, opts, &mut outputs),
    };
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        config_path: opts.config.as_ref().map(|p| p.display().to_string()),
        resolved_config: &cfg,
        base_seed: cfg.seed,
        out_dir: opts.out.display().to_string(),
        subcommand: opts.command.name(),
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    outputs.add("manifest.json", pretty(&manifest));
    for (rel, body) in &outputs.0 {
        write_atomic(&opts.out.join(rel), body)?;
    }
    Ok(passed)
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    s
}

fn write_atomic(path: &Path, body: &str) -> Res<()> {
    let dir = path.parent().expect("output path has a parent");
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let name = path.file_name().expect("file name").to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, body).map_err(|e| format!("{}: {e}", tmp.display()))?;
    fs::rename(&tmp, path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(())
}

fn experiment(report: ExperimentReport, opts: &Options, outputs: &mut Outputs) -> bool {
    let json = report.to_json();
    if opts.json {
        print!("{json}");
    } else {
        for r in &report.records {
            let seed = r
                .seed
                .map(|s| s.to_string())
                .unwrap_or_else(|| "avg".into());
            println!(
                "n={:<6} seed={seed:<6} phi={} stat={:.6e} se={:.2e} bound={:.6e} {}",
                r.n,
                r.phi,
                r.stat,
                r.se,
                r.bound,
                if r.pass { "ok" } else { "FAIL" }
            );
        }
        for c in &report.checks {
            println!(
                "{} {}: {}",
                if c.pass { "ok  " } else { "FAIL" },
                c.name,
                c.detail
            );
        }
    }
    outputs.add("report.json", json);
    outputs.add("report.csv", report.to_csv());
    report.all_passed()
}

/// Per-graph outputs go to `n<N>/` when the n-list has several entries.
fn graph_dir(cfg: &ExperimentConfig, n: usize) -> PathBuf {
    if cfg.graph.n.len() == 1 {
        PathBuf::new()
    } else {
        PathBuf::from(format!("n{n}"))
    }
}

fn graphs(cfg: &ExperimentConfig) -> Res<Vec<GraphInstance>> {
    let env = cfg.env_seeds[0];
    Ok(cfg
        .graph
        .n
        .iter()
        .map(|&n| cfg.build_graph(n, env))
        .collect::<Result<_, _>>()?)
}

fn gen_graph(cfg: &ExperimentConfig, outputs: &mut Outputs) -> Res<bool> {
    for g in graphs(cfg)? {
        let dir = graph_dir(cfg, g.n());
        let mut vertices = String::from(if g.dim() == 1 { "id,x\n" } else { "id,x,y\n" });
        for v in 0..g.num_vertices() {
            let coords: Vec<String> = g.position(v).iter().map(|c| c.to_string()).collect();
            writeln!(vertices, "{v},{}", coords.join(","))?;
        }
        let mut edges = String::from("u,v,conductance\n");
        for ((u, v), c) in g.edges().iter().zip(g.conductances()?) {
            writeln!(edges, "{u},{v},{c}")?;
        }
        outputs.add(dir.join("vertices.csv"), vertices);
        outputs.add(dir.join("edges.csv"), edges);
    }
    Ok(true)
}

fn simulate(cfg: &ExperimentConfig, outputs: &mut Outputs) -> Res<bool> {
    let times = cfg.sample_times();
    let horizon = times.last().copied().unwrap_or(cfg.t).max(cfg.t);
    let mut conserved = true;
    for g in graphs(cfg)? {
        let (init_seed, clock_seed) = replica_seeds(cfg.seed, g.n(), cfg.env_seeds[0], 0);
        let eta0 = sample_product_measure(&g, |x| cfg.initial_profile.eval(x), init_seed)?;
        let log = ClockSampler::new(&g)?.sample_log(horizon, clock_seed)?;
        let snapshots = exclusion_trajectory(&eta0, &log, &times)?;
        conserved &= snapshots
            .iter()
            .all(|s| s.particle_count() == eta0.particle_count());
        let mut csv = String::from("time,vertex,occupancy\n");
        for (t, eta) in times.iter().zip(&snapshots) {
            for (v, &b) in eta.bits().iter().enumerate() {
                writeln!(csv, "{t},{v},{}", b as u8)?;
            }
        }
        let epsilon = cfg
            .simulate
            .epsilon
            .unwrap_or(1.0 / g.time_scale())
            .min(horizon);
        let components = component_statistics(&log, epsilon)?;
        let counts = log.edge_counts();
        let summary = json!({
            "schema_version": SCHEMA_VERSION,
            "n": g.n(),
            "env_seed": cfg.env_seeds[0],
            "horizon": horizon,
            "particles": eta0.particle_count(),
            "total_events": log.events().len(),
            "max_edge_count": counts.iter().max().copied().unwrap_or(0),
            "edge_counts": counts,
            "epsilon": epsilon,
            "windows": components.windows,
            "max_component_size": components.max_size,
            "worst_window": components.worst_window,
            "component_histogram": components.histogram,
        });
        let dir = graph_dir(cfg, g.n());
        outputs.add(dir.join("trajectory.csv"), csv);
        outputs.add(dir.join("events_summary.json"), pretty(&summary));
    }
    Ok(conserved)
}

fn kernel(cfg: &ExperimentConfig, outputs: &mut Outputs) -> Res<bool> {
    let mut ok = true;
    for g in graphs(cfg)? {
        let mut csv = String::from("t,x,y,p\n");
        let mut checks = Vec::new();
        for &t in &cfg.kernel_times() {
            let p = transition_matrix(&g, t, cfg.numerics.semigroup_tol)?;
            for x in 0..p.size() {
                for (y, v) in p.row(x).iter().enumerate() {
                    writeln!(csv, "{t},{x},{y},{v:e}")?;
                }
            }
            let (asym, row) = (p.max_asymmetry(), p.max_row_sum_deviation());
            ok &= asym <= KERNEL_TOL && row <= KERNEL_TOL && p.min_entry() >= -KERNEL_TOL;
            checks.push(json!({
                "t": t,
                "max_asymmetry": asym,
                "max_row_sum_deviation": row,
                "min_entry": p.min_entry(),
            }));
        }
        let summary = json!({ "schema_version": SCHEMA_VERSION, "n": g.n(), "tolerance": KERNEL_TOL, "times": checks });
        let dir = graph_dir(cfg, g.n());
        outputs.add(dir.join("kernel.csv"), csv);
        outputs.add(dir.join("kernel_checks.json"), pretty(&summary));
    }
    Ok(ok)
}

fn pde(cfg: &ExperimentConfig, outputs: &mut Outputs) -> Res<bool> {
    let g = graphs(cfg)?.pop().expect("validated non-empty");
    let d = resolve_diffusivity(cfg.diffusivity, &g)?;
    let mesh = cfg.numerics.mesh;
    let initial = DensityProfile::from_fn(mesh, g.dim(), |x| cfg.initial_profile.eval(x))?;
    let mut csv = String::from(if g.dim() == 1 {
        "time,x,value\n"
    } else {
        "time,x,y,value\n"
    });
    for &t in &cfg.pde_times() {
        let solved = if t == 0.0 {
            initial.clone()
        } else {
            heat_solve(&initial, d, t, cfg.numerics.steps)?
        };
        for (i, v) in solved.values().iter().enumerate() {
            if g.dim() == 1 {
                writeln!(csv, "{t},{},{v}", i as f64 / mesh as f64)?;
            } else {
                let (a, b) = (i % mesh, i / mesh);
                writeln!(
                    csv,
                    "{t},{},{},{v}",
                    a as f64 / mesh as f64,
                    b as f64 / mesh as f64
                )?;
            }
        }
    }
    outputs.add("profile.csv", csv);
    Ok(true)
}
