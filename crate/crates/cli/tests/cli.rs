use std::fs;
use std::path::Path;

use assert_cmd::Command;

const TINY: &str = "budget = 3000
repeats = 1
n_train_tasks = 4
n_test_tasks = 4
eval_every = 1

[policy]
hidden = [8]
gru_hidden = 8
";

fn metaexp() -> Command {
    let mut c = Command::cargo_bin("metaexp").unwrap();
    c.env("METAEXP_THREADS", "2");
    c
}

fn tiny_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("tiny.toml");
    fs::write(&path, format!("{TINY}{extra}")).unwrap();
    path
}

fn code(out: &std::process::Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn bogus_algo_is_a_usage_error() {
    let out = metaexp().args(["train", "--algo", "bogus"]).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn train_writes_curve_checkpoint_and_finalized_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let run = dir.path().join("run");
    let out = metaexp()
        .args(["train", "--algo", "emaml", "--env", "pointmass", "--seed", "0"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(run.join("curve.csv")).unwrap();
    assert!(csv.starts_with("env_steps,algo,env,seed,pre_return,post_return,gap,tile_fraction,death_visits,goals_reached\n"));
    assert!(csv.lines().count() >= 3);
    assert!(run.join("checkpoint.bin").exists());
    let echoed = fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(echoed.contains("algo = \"emaml\""));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["exit_status"], 0);
    assert_eq!(manifest["config"].as_str().unwrap(), echoed);
    assert!(manifest["finished"].is_string());
    let manifests = fs::read_dir(&run)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("run_manifest"))
        .count();
    assert_eq!(manifests, 1);
}

#[test]
fn identical_invocations_give_identical_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let mut csvs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "3")] {
        let run = dir.path().join(name);
        metaexp()
            .env("METAEXP_THREADS", threads)
            .args(["train", "--algo", "maml", "--seed", "5"])
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&run)
            .assert()
            .success();
        csvs.push(fs::read(run.join("curve.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn unknown_config_key_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "\n[meta]\ngama = 0.5\n");
    let out = metaexp().arg("train").arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("r")).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("meta.gama"));
}

#[test]
fn out_of_range_config_value_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "\n[meta]\ngamma = 1.5\n");
    let out = metaexp().arg("train").arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("r")).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("meta.gamma"));
}

#[test]
fn exploding_loss_is_a_numeric_fault() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "\n[meta]\nent_coeff = 1e308\n");
    let run = dir.path().join("r");
    let out = metaexp().args(["train", "--algo", "maml", "--env", "krazy"]).arg("--config").arg(&cfg).arg("--out").arg(&run).output().unwrap();
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numeric fault in autodiff op"));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["exit_status"], 3);
}

#[test]
fn diverged_parameters_are_a_numeric_fault() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "\n[inner]\nalpha = 1e308\n[meta]\nbeta = 1e308\n");
    let out = metaexp()
        .args(["train", "--algo", "maml", "--env", "krazy"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("r"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn eval_reports_gap_and_sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let run = dir.path().join("run");
    metaexp().arg("train").arg("--config").arg(&cfg).arg("--out").arg(&run).assert().success();
    let eval_dir = dir.path().join("eval");
    let out = metaexp()
        .arg("eval")
        .arg("--config")
        .arg(&cfg)
        .arg("--checkpoint")
        .arg(run.join("checkpoint.bin"))
        .args(["--sweep-steps", "5"])
        .arg("--out")
        .arg(&eval_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean gap"));
    let sweep = fs::read_to_string(eval_dir.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 6);
    assert_eq!(fs::read_to_string(eval_dir.join("eval.csv")).unwrap().lines().count(), 1 + 4);
}

#[test]
fn eval_rejects_missing_or_mismatched_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let out = metaexp()
        .arg("eval")
        .arg("--config")
        .arg(&cfg)
        .arg("--checkpoint")
        .arg(dir.path().join("nope.bin"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);

    let run = dir.path().join("run");
    metaexp().arg("train").arg("--config").arg(&cfg).arg("--out").arg(&run).assert().success();
    let wider = dir.path().join("wide.toml");
    fs::write(&wider, TINY.replace("hidden = [8]", "hidden = [16]")).unwrap();
    let out = metaexp()
        .arg("eval")
        .arg("--config")
        .arg(&wider)
        .arg("--checkpoint")
        .arg(run.join("checkpoint.bin"))
        .arg("--out")
        .arg(dir.path().join("e"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema mismatch"));
}

#[test]
fn oracle_autodiff_passes_and_catches_injected_sign_error() {
    let out = metaexp().args(["oracle", "--suite", "autodiff"]).output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).lines().all(|l| !l.starts_with("FAIL")));

    let out = metaexp()
        .env("METAEXP_INJECT_TANH_SIGN_ERROR", "1")
        .args(["oracle", "--suite", "autodiff"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn sweep_runs_each_pair_in_its_own_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let out_dir = dir.path().join("sweep");
    metaexp()
        .args(["sweep", "--algos", "maml,erl2", "--seeds", "0,1"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .assert()
        .success();
    for name in ["maml_seed0", "maml_seed1", "erl2_seed0", "erl2_seed1"] {
        assert!(out_dir.join(name).join("curve.csv").exists(), "{name}");
    }
}
