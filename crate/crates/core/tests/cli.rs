use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fksteer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fksteer")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_run() -> Vec<&'static str> {
    vec![
        "--set", "n_particles=5",
        "--set", "steps=8",
        "--set", "t_start=8",
        "--set", "terminal_evals=1",
    ]
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn oracle_passes_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = fksteer(&["oracle", "--set", "n_particles=20000", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.starts_with("TV=") && line.trim_end().ends_with("PASS"), "{line}");
    let csv = fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn oracle_failure_exits_three() {
    let o = fksteer(&["oracle", "--set", "n_particles=3", "--set", "oracle_tolerance=0.001"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL"));
    let record: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(record["error"], "tolerance");
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--baseline", "--out", path(dir.path())];
    args.extend(small_run());
    let o = fksteer(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(summary["n_particles"], 5);
    for f in [
        "trajectory.csv", "events.csv", "terminal.csv", "rewards_long.csv", "diversity.csv",
        "ss_fractions.csv", "run_manifest.json", "baseline/trajectory.csv",
    ] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let terminal = fs::read_to_string(dir.path().join("terminal.csv")).unwrap();
    assert_eq!(terminal.lines().count(), 6);
}

#[test]
fn set_overrides_match_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "n_particles = 5\nsteps = 8\nt_start = 8\nterminal_evals = 1\npotential = \"max\"\n").unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let from_file = fksteer(&["run", "--config", path(&cfg), "--out", path(&a)]);
    let mut args = vec!["run", "--out", path(&b), "--set", "potential=max"];
    args.extend(small_run());
    let from_flags = fksteer(&args);
    assert_eq!(from_file.status.code(), Some(0), "{}", stderr(&from_file));
    assert_eq!(stdout(&from_file).split("elapsed").next(), stdout(&from_flags).split("elapsed").next());
    assert_eq!(
        fs::read(a.join("trajectory.csv")).unwrap(),
        fs::read(b.join("trajectory.csv")).unwrap()
    );
}

#[test]
fn manifest_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let mut args = vec!["run", "--out", path(&a), "--seed", "9"];
    args.extend(small_run());
    assert_eq!(fksteer(&args).status.code(), Some(0));
    let b = dir.path().join("b");
    let manifest = a.join("run_manifest.json");
    let o = fksteer(&["run", "--config", path(&manifest), "--out", path(&b)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        fs::read(a.join("trajectory.csv")).unwrap(),
        fs::read(b.join("trajectory.csv")).unwrap()
    );
}

#[test]
fn missing_config_fails() {
    let o = fksteer(&["run", "--config", "/nonexistent/run.toml"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(serde_json::from_str::<serde_json::Value>(stderr(&o).trim()).is_ok());
}

#[test]
fn validation_errors_exit_one() {
    for bad in ["tau=0", "n_particles=0", "dt=0", "no_such_key=1", "potential=median"] {
        let o = fksteer(&["run", "--set", bad, "--out", "/tmp/never-written"]);
        assert_eq!(o.status.code(), Some(1), "{bad}: {}", stderr(&o));
    }
    assert_eq!(fksteer(&["run", "--bogus-flag"]).status.code(), Some(1));
    assert_eq!(fksteer(&["--version"]).status.code(), Some(0));
}

#[test]
fn corrupted_kernel_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("kernels.csv");
    fs::write(&k, "0.5,0.5\n0.2,oops\n").unwrap();
    let kernels = format!("kernels={}", path(&k));
    let o = fksteer(&[
        "oracle", "--set", &kernels, "--set", "states=2", "--set", "steps=1", "--set", "t_start=1",
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("oops"));

    fs::write(&k, "0.5,0.5\n0.7,0.7\n").unwrap();
    let o = fksteer(&[
        "oracle", "--set", &kernels, "--set", "states=2", "--set", "steps=1", "--set", "t_start=1",
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn report_rebuilds_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--out", path(dir.path())];
    args.extend(small_run());
    assert_eq!(fksteer(&args).status.code(), Some(0));
    let original = fs::read_to_string(dir.path().join("rewards_long.csv")).unwrap();
    let out = dir.path().join("again");
    let o = fksteer(&["report", "--run", path(dir.path()), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("t,n,mean,std,diversity"));
    assert_eq!(original, fs::read_to_string(out.join("rewards_long.csv")).unwrap());
}

#[test]
fn potential_sweep_runs_twelve_cells() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "sweep", "--axis", "potential", "--values", "immediate,difference,max,sum",
        "--out", path(dir.path()),
    ];
    args.extend(small_run());
    let o = fksteer(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 4);
    let runs = fs::read_to_string(dir.path().join("sweep_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 13);
    assert!(!runs.contains(",failed,"));
    assert!(dir.path().join("potential=sum/seed2/terminal.csv").exists());
}

#[test]
fn sweep_rejects_unknown_axis() {
    let o = fksteer(&["sweep", "--axis", "length", "--values", "3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["binding.toml", "oracle.toml"] {
        let file = root.join(name);
        let o = fksteer(&[
            "run", "--config", path(&file), "--set", "n_particles=3", "--set", "terminal_evals=1",
            "--out", path(tempfile::tempdir().unwrap().path()),
        ]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
    }
}
