use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dlc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlc")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const TINY: &str = r#"
seed = 0
[registration]
n_train = 6
n_test = 3
[registration.data]
n_points = 12
[registration.task]
width = 8
feat_dim = 4
[train]
epochs = 1
[averaging]
n_trials = 500
t_max = 16
"#;

#[test]
fn simulate_averaging_writes_artifacts() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), TINY);
    let out = d.path().join("avg");
    let o = dlc(&["simulate-averaging", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("averaging.csv")).unwrap();
    assert!(csv.starts_with("t,mse,theory\n"));
    assert_eq!(csv.lines().count(), 17);
    assert!(fs::read_to_string(out.join("config.toml")).unwrap().contains("seed = 3"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("slope"));
}

#[test]
fn gen_data_train_and_reuse_checkpoint() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), TINY);
    let data = d.path().join("data");
    assert!(dlc(&["gen-data", "--config", &cfg, "--out", data.to_str().unwrap()]).status.success());
    assert!(data.join("train/pair_00005_gt.json").exists());
    assert!(data.join("test/pair_00002_src.xyz").exists());

    let train = d.path().join("train");
    let o = dlc(&["train", "--config", &cfg, "--out", train.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = train.join("checkpoint.ckpt");
    for sub in ["infer", "icp", "audit", "slice"] {
        let out = d.path().join(sub);
        let o = dlc(&[sub, "--config", &cfg, "--checkpoint", ckpt.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{sub}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("summary.json").exists());
    }
}

#[test]
fn oracle_audit_and_presets() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("a");
    let o = dlc(&["audit", "--oracle", "quadratic", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let s = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(s.contains("\"con2_violation_rate\": 0.0"), "{s}");

    let o = dlc(&["preset", "alignment"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("mu = 4.0") && text.contains("rho = 0.2"), "{text}");
}

#[test]
fn config_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("x");
    let bad = write_config(d.path(), "[train]\nepochs = 0\n");
    assert_eq!(dlc(&["train", "--config", &bad, "--out", out.to_str().unwrap()]).status.code(), Some(2));
    let malformed = write_config(d.path(), "seed = [\n");
    assert_eq!(dlc(&["sweep", "--config", &malformed, "--out", out.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(dlc(&["run", "no-such-experiment", "--out", out.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(dlc(&["audit", "--oracle", "nope", "--out", out.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(dlc(&["train"]).status.code(), Some(2));
}

#[test]
fn divergent_training_exits_3() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        &format!("{TINY}\n[train.optimizer]\nkind = \"sgd\"\nlr = 1e200\n").replace("[train]\nepochs = 1", "[train]\nepochs = 3"),
    );
    let o = dlc(&["train", "--config", &cfg, "--out", d.path().join("t").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
