use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_noma-plaf"))
}

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_writes_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("metrics.csv");
    let cfg = smoke_config();
    let o = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--experiments",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("detector,device,block,train_symbol,ber,rmse,bit_errors,bits,experiments")
    );
    // 3 detectors x 3 devices x 2 blocks x 4 checkpoints.
    assert_eq!(lines.count(), 72);
}

#[test]
fn run_is_deterministic_and_seed_sensitive() {
    let cfg = smoke_config();
    let cfg = cfg.to_str().unwrap();
    let a = run(&[
        "run",
        cfg,
        "--experiments",
        "1",
        "--detectors",
        "plaf,mmse-sic",
    ]);
    let b = run(&[
        "run",
        cfg,
        "--experiments",
        "1",
        "--detectors",
        "plaf,mmse-sic",
    ]);
    let c = run(&[
        "run",
        cfg,
        "--experiments",
        "1",
        "--detectors",
        "plaf,mmse-sic",
        "--seed",
        "99",
    ]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let text = stdout(&a);
    assert!(text
        .lines()
        .skip(1)
        .all(|l| l.starts_with("plaf,") || l.starts_with("mmse-sic,")));
}

#[test]
fn config_errors_exit_with_two() {
    let cfg = smoke_config();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(
        run(&["run", cfg, "--detectors", "zf"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["run", cfg, "--experiments", "0"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["run", "/nonexistent/config.toml"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["validate-config", "/nonexistent/config.toml"])
            .status
            .code(),
        Some(2)
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(cfg)
        .unwrap()
        .replace("validation_interval = 50", "validation_interval = 70");
    std::fs::write(&bad, text).unwrap();
    let o = run(&["validate-config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("validation_interval"));
}

#[test]
fn runtime_errors_exit_with_three() {
    let cfg = smoke_config();
    let o = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--experiments",
        "1",
        "--out",
        "/nonexistent/dir/out.csv",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/dir/out.csv"));
}

#[test]
fn validate_config_accepts_shipped_configs() {
    for name in ["smoke.toml", "reference.toml"] {
        let path = Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../configs")
            .join(name);
        let o = run(&["validate-config", path.to_str().unwrap()]);
        assert!(
            o.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(stdout(&o).contains(": ok"));
    }
}

#[test]
fn printed_config_round_trips() {
    let o = run(&["print-config", "--devices", "4", "--activity", "0.6"]);
    assert!(o.status.success());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k4.toml");
    std::fs::write(&path, &o.stdout).unwrap();
    let v = run(&["validate-config", path.to_str().unwrap()]);
    assert!(stdout(&v).contains("K = 4"));
}

#[test]
fn unit_oracles_print_reference_values() {
    let o = run(&["unit-oracles"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("1.237500000000000"));
    assert!(text.contains("0.400000000000000"));
    assert!(text.contains("0.367879441171442 (exp(-1) = 0.367879441171442)"));
}
