use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dpssgd"))
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn calibrate_prints_sigma() {
    let o = bin()
        .args([
            "calibrate",
            "--eps",
            "1",
            "--delta",
            "1e-5",
            "--q",
            "1",
            "--steps",
            "1",
        ])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let sigma: f64 = stdout(&o).trim().parse().unwrap();
    assert!(sigma > 3.0 && sigma <= 4.845, "{sigma}");
}

#[test]
fn unreachable_budget_exits_with_calibration_code() {
    let o = bin()
        .args([
            "calibrate",
            "--eps",
            "1e-4",
            "--delta",
            "1e-5",
            "--q",
            "1",
            "--steps",
            "1",
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(7));
    assert!(
        stderr(&o).starts_with("error[calibration]"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn bad_arguments_exit_with_config_code() {
    let o = bin()
        .args([
            "calibrate",
            "--eps",
            "1",
            "--delta",
            "2",
            "--q",
            "0.1",
            "--steps",
            "10",
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[config]"), "{}", stderr(&o));
}

#[test]
fn schema_errors_are_listed_by_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    let text = std::fs::read_to_string(repo("configs/blobs_smoke.toml"))
        .unwrap()
        .replace("batch_size = 64", "batch_size = -1\nbogus = 3");
    std::fs::write(&cfg, text).unwrap();
    let o = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("training.batch_size"), "{err}");
    assert!(err.contains("training.bogus"), "{err}");
}

#[test]
fn missing_config_is_an_io_error() {
    let o = bin().args(["run", "does-not-exist.toml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[io]"), "{}", stderr(&o));
}

#[test]
fn run_honors_output_env_and_checkpoint_evaluates() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("smoke");
    let o = bin()
        .arg("run")
        .arg(repo("configs/blobs_smoke.toml"))
        .env("DPSSGD_OUTPUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["metrics.csv", "final.ckpt", "summary.txt"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("privacy ledger"), "{summary}");

    // A checkpoint evaluated against an unreadable dataset reports a
    // format error; against a missing one an io error.
    let junk = tmp.path().join("junk.bin");
    std::fs::write(&junk, [1u8, 2, 3]).unwrap();
    let o = bin()
        .arg("eval")
        .arg(out.join("final.ckpt"))
        .arg(&junk)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let o = bin()
        .arg("eval")
        .arg(out.join("final.ckpt"))
        .arg(tmp.path().join("absent.bin"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn mnist_checkpoint_evaluates_on_test_split() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("short.toml");
    let text = std::fs::read_to_string(repo("configs/mnist_cnn.toml"))
        .unwrap()
        .replace(
            "../data/mnist-subset",
            repo("data/mnist-subset").to_str().unwrap(),
        )
        .replace("epochs = 20", "steps = 5");
    std::fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("out");
    let o = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let o = bin()
        .arg("eval")
        .arg(out.join("final.ckpt"))
        .arg(repo("data/mnist-subset"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let acc: f64 = stdout(&o).trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let run_acc = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(
        run_acc.contains(&format!("test accuracy        {acc:.4}")),
        "{run_acc}"
    );
}
