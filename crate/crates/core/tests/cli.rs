//! End-to-end checks of the `rabi-bloch` binary.

use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &["--set", "n_sites=32", "--set", "center_site=16", "--set", "width_sites=4", "--set", "t_end=40", "--set", "sites=[20]"];

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rabi-bloch")).args(args).output().expect("binary runs")
}

fn run_small(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--scenario", "fig3", "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    bin(&args)
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn presets_are_listed_and_printable() {
    let out = bin(&["presets"]);
    assert!(out.status.success());
    let names = String::from_utf8(out.stdout).unwrap();
    assert!(names.lines().any(|l| l == "fig13"));
    let fig13 = bin(&["presets", "fig13"]);
    assert!(String::from_utf8(fig13.stdout).unwrap().contains("[chain]"));
}

#[test]
fn unknown_preset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["run", "--scenario", "nope", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("nope"));
}

#[test]
fn bad_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_small(dir.path(), &["--set", "no_such_key=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_outputs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_small(&a, &[]).status.success());
    assert!(run_small(&b, &[]).status.success());
    for name in ["observables.csv", "centroid.csv", "spacetime_current.csv", "spectrum_current_j20.csv"] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name}");
    }
    let meta: serde_json::Value = serde_json::from_str(&read(&a.join("meta.json"))).unwrap();
    assert_eq!(meta["scenario"]["chain"]["n_sites"], 32);
}

#[test]
fn meta_json_reruns_the_same_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_small(&a, &[]).status.success());
    let meta = a.join("meta.json");
    let out = bin(&["run", "--scenario", meta.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&a.join("observables.csv")), read(&b.join("observables.csv")));
}

#[test]
fn spectrum_of_a_written_column() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    assert!(run_small(&run_dir, &[]).status.success());
    let spec_dir = dir.path().join("spec");
    let input = run_dir.join("observables.csv");
    let out = bin(&[
        "spectrum",
        "--input",
        input.to_str().unwrap(),
        "--column",
        "current",
        "--site",
        "20",
        "--label",
        "--out",
        spec_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_dir(&spec_dir).unwrap().count() >= 2);
}

#[test]
fn lines_prints_the_comb() {
    let out = bin(&["lines", "--params", "fig3", "--max-freq", "1.0"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# omega_bar = "));
    let freqs: Vec<f64> = text.lines().skip(2).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(!freqs.is_empty());
    assert!(freqs.iter().all(|&f| f <= 1.0));
}

#[test]
fn sweep_writes_an_index() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "--scenario", "fig3", "--axis", "bloch=0.04,0.05", "--jobs", "2", "--out", dir.path().to_str().unwrap()];
    args.extend_from_slice(SMALL);
    let out = bin(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let index: serde_json::Value = serde_json::from_str(&read(&dir.path().join("index.json"))).unwrap();
    let cells = index["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 2);
    assert_eq!(cells[1]["overrides"].as_array().unwrap().last().unwrap(), "bloch=0.05");
    assert!(dir.path().join("cell_0001/observables.csv").is_file());
}
