use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dmasense::Scenario;
use num_complex::Complex64;

fn dmasense(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmasense")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> PathBuf {
    let mut s = Scenario::reference();
    s.waveform.subcarriers = 16;
    let path = dir.join("small.toml");
    s.save(&path).unwrap();
    path
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn defaults_file_reproduces_the_builtin_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(dmasense(&["defaults", "--out", out]).status.success());
    let loaded = Scenario::load(dir.path().join("scenario.toml")).unwrap();
    assert_eq!(loaded.hash(), Scenario::reference().hash());
}

#[test]
fn validate_props_reports_are_byte_identical() {
    // The reference scene: the exact-identity thresholds assume its
    // conditioning.
    let dir = tempfile::tempdir().unwrap();
    assert!(dmasense(&["defaults", "--out", dir.path().to_str().unwrap()]).status.success());
    let config = dir.path().join("scenario.toml");
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = dmasense(&[
            "validate-props",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
        reports.push((read(out.join("validation.txt")), read(out.join("validation.csv"))));
    }
    assert_eq!(reports[0], reports[1]);
    assert!(reports[0].0.ends_with("overall: PASS\n"));
    assert!(reports[0].1.contains("# seed=3"));
}

#[test]
fn validate_props_exits_nonzero_when_unlocalizable() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Scenario::reference();
    s.waveform.subcarriers = 8;
    s.geometry.reflection = vec![Complex64::new(0.0, 0.0); s.geometry.scatterer_count()];
    let path = dir.path().join("dead.toml");
    s.save(&path).unwrap();
    let o = dmasense(&["validate-props", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("unlocalizable") && text.ends_with("overall: FAIL\n"), "{text}");
}

#[test]
fn sweeps_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let run = |threads: &str| {
        let o = dmasense(&[
            "--threads",
            threads,
            "sweep-bandwidth",
            "--config",
            config.to_str().unwrap(),
            "--grid",
            "200,600",
        ]);
        assert!(o.status.success());
        o.stdout
    };
    let one = run("1");
    assert_eq!(one, run("2"));
    let text = String::from_utf8(one).unwrap();
    assert!(text.starts_with("# tool=dmasense "));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn leakage_sweep_with_flags_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("out");
    let o = dmasense(&[
        "sweep-leakage",
        "--config",
        config.to_str().unwrap(),
        "--reoptimize",
        "--budget",
        "8",
        "--seed",
        "5",
        "--single-path",
        "--grid",
        "0,0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(out.join("leakage.csv"));
    for line in ["# seed=5", "# reoptimize=true", "# single_path=true", "budget=8"] {
        assert!(csv.contains(line), "{line} missing");
    }
    assert!(dmasense(&["plot", out.join("leakage.csv").to_str().unwrap()]).status.success());
    assert!(read(out.join("leakage.svg")).starts_with("<svg"));
    let o = dmasense(&["plot", out.join("leakage.csv").to_str().unwrap(), "--y", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn peb_writes_bounds_and_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("out");
    let o = dmasense(&["peb", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let peb = read(out.join("peb.csv"));
    let value: f64 = peb.lines().find_map(|l| l.strip_prefix("peb_m,")).unwrap().parse().unwrap();
    assert!(value > 0.0 && value.is_finite());
    let table = read(out.join("configuration.csv"));
    assert!(table.lines().any(|l| l == "j,n,m,f_r_hz"));
}

#[test]
fn invalid_arguments_are_rejected() {
    assert_eq!(dmasense(&["--threads", "0", "defaults"]).status.code(), Some(2));
    assert_eq!(dmasense(&["sweep-leakage", "--grid", "0,0.99"]).status.code(), Some(2));
    assert_eq!(dmasense(&["peb", "--config", "/nonexistent.toml"]).status.code(), Some(2));
}
