use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[problem]
grid = { dim = 1, extents = [1.0], cells = [24] }
motility = { family = "exp_decay", params = [1.0, 0.5] }
epsilon = 0.1
u0 = { kind = "gaussian", center = [0.5], width = 0.1, amplitude = 1.0 }
v0 = { kind = "constant", value = 1.0 }

[time]
t_end = 0.1
dt = 1e-2

[output]
directory = "tiny"
formats = ["csv", "snapshots", "svg"]
"#;

fn mlab(args: &[&str], root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mlab"));
    cmd.args(args).env_remove("MLAB_OUTPUT_ROOT");
    if let Some(r) = root {
        cmd.env("MLAB_OUTPUT_ROOT", r);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("c.toml");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_writes_under_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let root = tmp.path().join("root");
    let out = mlab(&["run", &cfg], Some(&root));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["diagnostics.csv", "manifest.json", "snapshots", "plots"] {
        assert!(root.join("tiny").join(f).exists(), "{f}");
    }

    // re-plotting an existing run
    let dir = root.join("tiny");
    let replot = mlab(&["plots", dir.to_str().unwrap()], None);
    assert_eq!(replot.status.code(), Some(0));
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &TINY.replace("dt = 1e-2", "dt = -1.0"));
    let out = mlab(&["run", &cfg], Some(tmp.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(!tmp.path().join("tiny").exists());

    let missing = tmp.path().join("absent.toml");
    assert_eq!(mlab(&["run", missing.to_str().unwrap()], Some(tmp.path())).status.code(), Some(2));

    let unknown = write_config(tmp.path(), &TINY.replace("epsilon = 0.1", "epsilon = 0.1\nbogus = 3"));
    assert_eq!(mlab(&["run", &unknown], Some(tmp.path())).status.code(), Some(2));
}

#[test]
fn solver_failure_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let body = TINY
        .replace("cells = [24]", "cells = [256]")
        .replace("dt = 1e-2", "dt = 1e-2\nsolver = \"cg\"\nmax_iters = 1");
    let cfg = write_config(tmp.path(), &body);
    let out = mlab(&["run", &cfg], Some(tmp.path()));
    assert_eq!(out.status.code(), Some(3));
    assert!(tmp.path().join("tiny/manifest.json").is_file());
}

#[test]
fn sweep_and_longtime() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &TINY.replace(", \"svg\"", ""));
    let out = mlab(&["sweep", &cfg, "--eps", "1,0.1,0"], Some(tmp.path()));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("tiny/sweep_report.json").is_file());
    assert_eq!(mlab(&["sweep", &cfg, "--eps", "0,1"], Some(tmp.path())).status.code(), Some(2));

    let out = mlab(&["longtime", &cfg, "--eta", "0.5,0.1", "--out", "lt"], Some(tmp.path()));
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("eta 0.5"));
    assert!(tmp.path().join("lt/longtime_report.json").is_file());
}

#[test]
fn odebounds_prints_a_table() {
    let out = mlab(&["odebounds", "verify", "--seed-range", "0..5"], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("kind,seed"));
    assert_eq!(lines.count(), 15);
    assert_ne!(mlab(&["odebounds", "verify", "--seed-range", "5..5"], None).status.code(), Some(0));
}

#[test]
fn plots_need_a_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    assert_ne!(mlab(&["plots", tmp.path().to_str().unwrap()], None).status.code(), Some(0));
}
