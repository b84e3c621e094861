use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kerrchaos::harness::bundle::{load_bundle, load_manifest, DATA, MANIFEST, TIMESERIES};
use kerrchaos::harness::cli::WORKERS_ENV;
use kerrchaos::harness::formats::TIMESERIES_HEADER;
use kerrchaos::harness::sweeps::{SELECTION_TABLE, SWEEP_TABLE, TRANSITION_SUMMARY};
use kerrchaos::harness::{list_fixtures, RunConfig, SweepConfig};

fn kerrchaos(args: &[&str], workers: Option<usize>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kerrchaos"));
    cmd.args(args).env_remove(WORKERS_ENV);
    if let Some(n) = workers {
        cmd.env(WORKERS_ENV, n.to_string());
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_QSD: &str = r#"
name = "small"
seed = 11
fock_dim = 14

[system]
delta = -1.0
chi = 0.3
nbar = 0.1
drive = { kind = "bichromatic", f0 = 0.6, f1 = 0.4, delta_mod = 5.0 }

[solver]
kind = "qsd"
n_traj = 24

[evolution]
dt = 0.001
t_end = 1.0
t_transient = 0.5
record_every = 50

[outputs.wigner]
resolution = 15
times = [0.5, 1.0]

[outputs.poincare]
n_points = 20
t_transient = 5.0
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn only_bundle(root: &Path) -> PathBuf {
    let dirs: Vec<_> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs[0].clone()
}

#[test]
fn malformed_config_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    for (i, text) in [
        "fixture = \"fig1\"\nunknown_key = 3",
        "fixture = \"fig1\"\n[evolution]\ndt = 0.0",
        "this is not toml",
        "fixture = \"nope\"",
    ]
    .iter()
    .enumerate()
    {
        let cfg = write_config(tmp.path(), &format!("bad{i}.toml"), text);
        let o = kerrchaos(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(2), "{text:?}: {}", stderr(&o));
        assert!(stderr(&o).contains("config failed"), "{}", stderr(&o));
        assert!(!out.exists());
    }
    let missing = kerrchaos(&["run", tmp.path().join("absent.toml").to_str().unwrap()], None);
    assert_eq!(missing.status.code(), Some(2));
    assert!(!tmp.path().join("runs").exists());

    let sweep = write_config(tmp.path(), "sweep.toml", "[base]\ndelta = 0.0\n");
    assert_eq!(kerrchaos(&["sweep", sweep.to_str().unwrap()], None).status.code(), Some(2));
    assert!(!tmp.path().join("sweeps").exists());
}

#[test]
fn runtime_failure_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
        fock_dim = 6
        [system]
        delta = 0.0
        chi = 0.0
        drive = { kind = "constant", amp = 4.0 }
        [evolution]
        t_end = 5.0
    "#;
    let cfg = write_config(tmp.path(), "overflow.toml", text);
    let o = kerrchaos(&["run", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("lindblad failed"));
    assert!(stderr(&o).contains("truncation"));
    // the staging directory is never created when the solver fails
    let runs = tmp.path().join("runs");
    assert!(!runs.exists() || fs::read_dir(&runs).unwrap().next().is_none());
}

#[test]
fn usage_errors() {
    assert_eq!(kerrchaos(&[], None).status.code(), Some(2));
    assert_eq!(kerrchaos(&["export", "x", "--format", "svg"], None).status.code(), Some(2));
    assert_eq!(kerrchaos(&["fixtures"], Some(0)).status.code(), Some(2));
    let help = kerrchaos(&["--help"], None);
    assert_eq!(help.status.code(), Some(0));
    for cmd in ["run", "fixtures", "sweep", "export"] {
        assert!(stdout(&help).contains(cmd));
    }
    let none = kerrchaos(&["export", "/nonexistent/bundle", "--format", "csv"], None);
    assert_eq!(none.status.code(), Some(2), "{}", stderr(&none));
}

#[test]
fn fixtures_listing() {
    let o = kerrchaos(&["fixtures"], None);
    assert!(o.status.success());
    let text = stdout(&o);
    for f in list_fixtures() {
        assert!(text.contains(&format!("{} ({})", f.name, f.regime)), "{text}");
    }
    assert!(text.contains("0.305 [0.225, 0.385]"));

    let o = kerrchaos(&["fixtures", "--json"], None);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let arr = v.as_array().unwrap();
    assert_eq!(arr.len(), 6);
    assert_eq!(arr[4]["name"], "fig5");
    assert_eq!(arr[4]["expected"]["lyapunov"]["nominal"], 0.4197);
    assert_eq!(arr[0]["params"]["drive"]["kind"], "bichromatic");
}

#[test]
fn bundles_are_reproducible_across_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL_QSD);
    let mut bundles = Vec::new();
    for workers in [1, 3] {
        let root = tmp.path().join(format!("w{workers}"));
        let o = kerrchaos(&["run", cfg.to_str().unwrap(), "--out", root.to_str().unwrap()], Some(workers));
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("(written)"));
        let dir = only_bundle(&root);
        assert_eq!(load_manifest(&dir).unwrap().workers, workers);
        bundles.push(dir);
    }
    assert_eq!(bundles[0].file_name(), bundles[1].file_name());
    assert!(bundles[0].file_name().unwrap().to_str().unwrap().starts_with("small-"));
    let manifest = load_manifest(&bundles[0]).unwrap();
    for f in &manifest.files {
        if f == MANIFEST {
            continue;
        }
        let a = fs::read(bundles[0].join(f)).unwrap();
        let b = fs::read(bundles[1].join(f)).unwrap();
        assert!(a == b, "{f} differs between worker counts");
    }
    for f in [TIMESERIES, "poincare.csv", "wigner_000.grid", "wigner_001.grid", DATA] {
        assert!(manifest.files.iter().any(|x| x == f), "{f} missing from {:?}", manifest.files);
    }
    let data = load_bundle(&bundles[0]).unwrap();
    assert_eq!(data.records.len(), 21);
    assert_eq!(data.wigner.len(), 2);
    assert_eq!(data.poincare.as_ref().unwrap().len(), 20);

    // a second run is a no-op unless forced
    let root = tmp.path().join("w1");
    let again = kerrchaos(&["run", cfg.to_str().unwrap(), "--out", root.to_str().unwrap()], None);
    assert!(stdout(&again).contains("(unchanged)"));
    let forced = kerrchaos(&["run", cfg.to_str().unwrap(), "--out", root.to_str().unwrap(), "--force"], None);
    assert!(stdout(&forced).contains("(written)"));
    assert_eq!(fs::read(bundles[0].join(TIMESERIES)).unwrap(), fs::read(bundles[1].join(TIMESERIES)).unwrap());
    assert_eq!(fs::read_dir(&root).unwrap().count(), 1, "no staging directory left behind");

    // a different seed lands in a different bundle
    let other = write_config(tmp.path(), "other.toml", &SMALL_QSD.replace("seed = 11", "seed = 12"));
    let o = kerrchaos(&["run", other.to_str().unwrap(), "--out", root.to_str().unwrap()], None);
    assert!(o.status.success());
    assert_eq!(fs::read_dir(&root).unwrap().count(), 2);
}

#[test]
fn export_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", &SMALL_QSD.replace("[outputs.wigner]", "[outputs]\npng = true\n[outputs.wigner]"));
    let root = tmp.path().join("runs");
    assert!(kerrchaos(&["run", cfg.to_str().unwrap(), "--out", root.to_str().unwrap()], None).status.success());
    let bundle = only_bundle(&root);
    assert!(bundle.join("wigner_001.png").exists());

    for format in ["csv", "grid", "png"] {
        let dest = tmp.path().join(format);
        let o = kerrchaos(
            &["export", bundle.to_str().unwrap(), "--format", format, "--out", dest.to_str().unwrap()],
            None,
        );
        assert!(o.status.success(), "{}", stderr(&o));
        for name in stdout(&o).lines() {
            assert_eq!(fs::read(dest.join(name)).unwrap(), fs::read(bundle.join(name)).unwrap(), "{name}");
        }
    }
    let ts = fs::read_to_string(tmp.path().join("csv").join(TIMESERIES)).unwrap();
    assert_eq!(ts.lines().next().unwrap(), TIMESERIES_HEADER.join(","));
    assert_eq!(ts.lines().count(), 22);
}

#[test]
fn empty_series_exports_header_only() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
        name = "instant"
        fock_dim = 8
        [system]
        delta = 0.0
        chi = 0.0
        drive = { kind = "constant", amp = 0.0 }
        [evolution]
        t_end = 0.0
    "#;
    let cfg = write_config(tmp.path(), "instant.toml", text);
    let root = tmp.path().join("runs");
    assert!(kerrchaos(&["run", cfg.to_str().unwrap(), "--out", root.to_str().unwrap()], None).status.success());
    let bundle = only_bundle(&root);
    let mut data = load_bundle(&bundle).unwrap();
    data.records.clear();
    fs::write(bundle.join(DATA), serde_json::to_vec(&data).unwrap()).unwrap();
    let dest = tmp.path().join("out");
    let o = kerrchaos(&["export", bundle.to_str().unwrap(), "--format", "csv", "--out", dest.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(dest.join(TIMESERIES)).unwrap(), format!("{}\n", TIMESERIES_HEADER.join(",")));
    let grids = kerrchaos(&["export", bundle.to_str().unwrap(), "--format", "grid", "--out", dest.to_str().unwrap()], None);
    assert!(grids.status.success());
    assert_eq!(stdout(&grids), "");
}

#[test]
fn sweep_writes_and_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
        name = "tiny"
        fock_dim = 8
        max_fock_dim = 20
        [base]
        delta = -1.0
        chi = 0.2
        drive = { kind = "gaussian_train", amp = 1.0, width = 0.1, period = 1.2566370614359172 }
        [axis1]
        param = "amp"
        values = [0.5, 1.0, 2.0]
        [axis2]
        param = "chi"
        values = [0.1, 0.3]
        [evolution]
        dt = 0.001
        t_end = 3.0
        t_transient = 1.0
        record_every = 100
        [lyapunov_config]
        t_transient = 5.0
        t_total = 20.0
        dt = 0.002
        [selection]
        band = [0.0, 1e9]
    "#;
    let cfg = write_config(tmp.path(), "tiny.toml", text);
    let o = kerrchaos(&["sweep", cfg.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("(6 points, 0 failed)"), "{}", stdout(&o));
    let dir = only_bundle(&tmp.path().join("sweeps"));
    let full = fs::read_to_string(dir.join(SWEEP_TABLE)).unwrap();
    assert_eq!(full.lines().count(), 7);
    assert_eq!(fs::read_to_string(dir.join(SELECTION_TABLE)).unwrap().lines().count(), 4);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(dir.join(TRANSITION_SUMMARY)).unwrap()).unwrap();
    assert_eq!(summary["curve"]["points"].as_array().unwrap().len(), 3);

    // drop the last rows as an interrupted run would, then resume
    let kept: Vec<&str> = full.lines().take(4).collect();
    fs::write(dir.join(SWEEP_TABLE), kept.join("\n") + "\n").unwrap();
    let o = kerrchaos(&["sweep", cfg.to_str().unwrap()], Some(2));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(dir.join(SWEEP_TABLE)).unwrap(), full);
}

#[test]
fn example_configs_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut runs = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_stem().unwrap().to_str().unwrap().to_string();
        if name.ends_with("_sweep") {
            let c = SweepConfig::load(&path).unwrap();
            assert_eq!(c.spec.points().unwrap().len(), 100);
            assert_eq!(c.selection.unwrap().band, [3.6958, 5.5217]);
        } else {
            let r = RunConfig::load(&path).unwrap().resolve().unwrap();
            assert_eq!(r.fixture.as_deref(), Some(name.as_str()));
            runs += 1;
        }
    }
    assert_eq!(runs, 6);
}
