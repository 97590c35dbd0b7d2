use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn exclusim(args: &[&str], env_threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_exclusim"));
    cmd.args(args).env_remove("EXCLUSIM_THREADS");
    if let Some(t) = env_threads {
        cmd.env("EXCLUSIM_THREADS", t);
    }
    cmd.output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

const SMALL: &str = "t = 0.02\nreplicas = 50\n[graph]\nn = [4]\n[field]\nkind = \"periodic\"\npattern = [1.0, 2.0]\n";

#[test]
fn invalid_config_exits_one_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "t = 0.05\n[graph]\nn = [64, 32]\n[field]\nkind = \"constant\"\nvalue = 1.0\n",
    );
    let out = dir.path().join("out");
    let res = exclusim(
        &["duality", "--config", &cfg, "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("strictly increasing"));
    assert!(!out.exists());
}

#[test]
fn unknown_key_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &format!("{SMALL}bogus = 3\n"));
    let out = dir.path().join("out");
    let res = exclusim(
        &["kernel", "--config", &cfg, "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("bogus") && err.contains("line"), "{err}");
    assert!(!out.exists());
}

#[test]
fn missing_config_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = exclusim(
        &[
            "pde",
            "--config",
            "/nonexistent.toml",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(res.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn default_duality_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = exclusim(
        &["duality", "--out", out.to_str().unwrap(), "--json"],
        Some("2"),
    );
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stdout)
    );
    let stdout: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(stdout, report);
    assert_eq!(report["schema_version"], 1);
    assert!(fs::read_to_string(out.join("report.csv"))
        .unwrap()
        .starts_with("schema_version,n,seed"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "duality");
    assert_eq!(manifest["resolved_config"]["replicas"], 400);
    let leftovers: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn gen_graph_writes_vertices_and_conductances() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let out = dir.path().join("out");
    let res = exclusim(
        &[
            "gen-graph",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(res.status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(out.join("vertices.csv")).unwrap(),
        "id,x\n0,0\n1,0.25\n2,0.5\n3,0.75\n"
    );
    assert_eq!(
        fs::read_to_string(out.join("edges.csv")).unwrap(),
        "u,v,conductance\n0,1,1\n0,3,2\n1,2,2\n2,3,1\n"
    );
}

#[test]
fn several_sizes_go_to_subdirectories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &SMALL.replace("n = [4]", "n = [4, 8]\ndimension = 2"),
    );
    let out = dir.path().join("out");
    let res = exclusim(
        &[
            "gen-graph",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let edges = fs::read_to_string(out.join("n8/edges.csv")).unwrap();
    assert_eq!(edges.lines().count(), 1 + 2 * 64);
    assert!(fs::read_to_string(out.join("n4/vertices.csv"))
        .unwrap()
        .starts_with("id,x,y\n"));
}

#[test]
fn simulate_conserves_particles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &SMALL.replace("n = [4]", "n = [32]"));
    let out = dir.path().join("out");
    let res = exclusim(
        &["simulate", "--config", &cfg, "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(res.status.code(), Some(0));
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut per_time = std::collections::BTreeMap::<String, u32>::new();
    for line in traj.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        *per_time.entry(cols[0].to_string()).or_default() += cols[2].parse::<u32>().unwrap();
    }
    assert_eq!(per_time.len(), 3);
    let counts: Vec<u32> = per_time.values().copied().collect();
    assert!(counts.windows(2).all(|w| w[0] == w[1]));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("events_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["particles"], counts[0]);
    assert!(summary["max_component_size"].as_u64().unwrap() >= 1);
}

#[test]
fn kernel_outputs_pass_checks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!("{SMALL}[kernel]\ntimes = [0.01, 0.05]\n"),
    );
    let out = dir.path().join("out");
    let res = exclusim(
        &["kernel", "--config", &cfg, "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(res.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("kernel.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 16);
    let checks: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("kernel_checks.json")).unwrap()).unwrap();
    assert!(checks["times"][1]["max_asymmetry"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn pde_profile_keeps_mass() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "{SMALL}[initial_profile]\nkind = \"cosine\"\nmean = 0.5\namplitude = 0.5\nk = [1]\n[numerics]\nmesh = 64\nsteps = 64\n"
    );
    let cfg = write(dir.path(), "c.toml", &body);
    let out = dir.path().join("out");
    let res = exclusim(
        &["pde", "--config", &cfg, "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let csv = fs::read_to_string(out.join("profile.csv")).unwrap();
    let last: Vec<f64> = csv
        .lines()
        .skip(1 + 64)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(last.len(), 64);
    assert!((last.iter().sum::<f64>() / 64.0 - 0.5).abs() < 1e-12);
}

#[test]
fn seed_flag_changes_reports_and_manifest_replays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &SMALL.replace("n = [4]", "n = [8, 16]"),
    );
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["duality", "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        exclusim(&args, None);
        fs::read(out.join("report.json")).unwrap()
    };
    let a = run("a", &["--config", &cfg]);
    let b = run("b", &["--config", &cfg, "--seed", "99"]);
    assert_ne!(a, b);
    let manifest = dir.path().join("b/manifest.json");
    let c = run("c", &["--config", manifest.to_str().unwrap()]);
    assert_eq!(b, c);
}

#[test]
fn help_lists_defaults() {
    let res = exclusim(&["--help"], None);
    let text = String::from_utf8_lossy(&res.stdout);
    assert!(text.contains("replicas        = 200"));
    assert!(text.contains("EXCLUSIM_THREADS"));
}
