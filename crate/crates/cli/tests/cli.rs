use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    let out = dir.join("out");
    std::fs::write(&path, format!("{body}\noutput.dir = \"{}\"\n", out.display())).unwrap();
    path
}

fn ef_lab(args: &[&str], cfg: Option<&Path>, seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ef-lab"));
    cmd.args(args);
    if let Some(c) = cfg {
        cmd.arg(c);
    }
    match seed_env {
        Some(s) => cmd.env("EF_LAB_SEED", s),
        None => cmd.env_remove("EF_LAB_SEED"),
    };
    cmd.output().unwrap()
}

const CE3_SGD: &str = r#"
oracle.kind = "ce3"
optimizer.rule = "ec_sgd"
optimizer.compressor = "top_k:1"
optimizer.gamma = 0.01
run.T = 50
"#;

#[test]
fn negative_gamma_is_a_usage_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &CE3_SGD.replace("0.01", "-1"));
    let out = ef_lab(&["run"], Some(&cfg), None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gamma"), "stderr: {err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{CE3_SGD}\noptimizer.gama = 0.1\n"));
    let out = ef_lab(&["run"], Some(&cfg), None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gama"));
}

#[test]
fn bad_subcommand_is_a_usage_error() {
    let out = ef_lab(&["reproduce", "nope"], None, None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_traces_summary_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{CE3_SGD}\nrun.seeds = [3, 4]\n"));
    let out = ef_lab(&["run", "--jobs", "2"], Some(&cfg), None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    for f in ["trace_seed3.csv", "trace_seed4.csv", "summary.csv", "meta.txt"] {
        assert!(o.join(f).exists(), "missing {f}");
    }
    let trace = std::fs::read_to_string(o.join("trace_seed3.csv")).unwrap();
    assert!(trace.starts_with("t,f_val,grad_norm_sq,err_norm_sq"));
    assert_eq!(trace.lines().count(), 51);
}

#[test]
fn jobs_do_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{CE3_SGD}\nrun.seeds = [1, 2, 3]\n"));
    let read = || std::fs::read(dir.path().join("out/summary.csv")).unwrap();
    assert!(ef_lab(&["run", "--jobs", "1"], Some(&cfg), None).status.success());
    let serial = read();
    assert!(ef_lab(&["run", "--jobs", "3"], Some(&cfg), None).status.success());
    assert_eq!(serial, read());
}

#[test]
fn seed_env_overrides_config_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CE3_SGD);
    let out = ef_lab(&["run"], Some(&cfg), Some("7,9"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    assert!(o.join("trace_seed7.csv").exists());
    assert!(o.join("trace_seed9.csv").exists());
    assert!(!o.join("trace_seed0.csv").exists());
    let meta = std::fs::read_to_string(o.join("meta.txt")).unwrap();
    assert!(meta.contains("seeds = [7, 9]"), "{meta}");
}

#[test]
fn malformed_seed_env_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CE3_SGD);
    let out = ef_lab(&["run"], Some(&cfg), Some("seven"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("EF_LAB_SEED"));
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{CE3_SGD}\nsweep.points = 3\nsweep.rules = [\"sgd\", \"ec_sgd\"]\n"),
    );
    let out = ef_lab(&["sweep", "--jobs", "2"], Some(&cfg), None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("rule,gamma,score,status"));
    assert_eq!(table.lines().count(), 7);
    assert!(String::from_utf8_lossy(&out.stdout).contains("best sgd"));
}
