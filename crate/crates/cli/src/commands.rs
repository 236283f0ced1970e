//! Subcommand implementations. Each returns the process exit code.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use metaexp::harness::{evaluate_gap, grad_steps_sweep, run_experiment, ExperimentConfig};
use metaexp::metaalgos::{Algo, PolicyKind, Streams};
use metaexp::oracle::{run_suite, Suite};
use metaexp::policy::load_checkpoint;

use crate::config::{resolve, to_toml, Overrides};
use crate::manifest::RunManifest;
use crate::CliError;

/// Env var that turns on the broken tanh backward rule for `oracle`.
pub const INJECT_VAR: &str = "METAEXP_INJECT_TANH_SIGN_ERROR";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Runs `body` inside a run directory bracketed by its manifest.
fn with_manifest(
    command: &str,
    out: &Path,
    cfg: &ExperimentConfig,
    body: impl FnOnce() -> Result<(), CliError>,
) -> Result<(), CliError> {
    create_dir(out)?;
    let text = to_toml(cfg);
    write(&out.join("config.toml"), &text)?;
    let mut manifest = RunManifest::start(command, text);
    manifest.write(out)?;
    let result = body();
    match &result {
        Ok(()) => manifest.finish(0, None),
        Err(e) => manifest.finish(e.exit_code(), Some(e.to_string())),
    }
    manifest.write(out)?;
    result
}

pub fn default_out(cfg: &ExperimentConfig) -> PathBuf {
    PathBuf::from("runs").join(format!("{}_{}_seed{}", cfg.algo, cfg.env, cfg.seed))
}

pub fn train(config: Option<&Path>, over: &Overrides, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = resolve(config, over)?;
    let out = out.unwrap_or_else(|| default_out(&cfg));
    with_manifest("train", &out, &cfg, || {
        let res = run_experiment(&cfg, Some(&out), None)?;
        if let Some(last) = res.curve.last() {
            println!(
                "final env_steps {} pre {:.6} post {:.6} gap {:.6}",
                last.env_steps, last.pre_return, last.post_return, last.gap
            );
        }
        println!("wrote {}", out.join("curve.csv").display());
        Ok(())
    })
}

pub fn eval(
    config: Option<&Path>,
    over: &Overrides,
    out: Option<PathBuf>,
    checkpoint: &Path,
    sweep_steps: Option<usize>,
) -> Result<(), CliError> {
    let cfg = resolve(config, over)?;
    let out = out.unwrap_or_else(|| checkpoint.parent().unwrap_or(Path::new(".")).join("eval"));
    let policy = PolicyKind::for_algo(cfg.algo, &cfg.policy, cfg.envs.obs_len(cfg.env));
    let params = load_checkpoint(checkpoint, &policy.init(cfg.seed)).map_err(|e| CliError::Usage(e.to_string()))?;
    if sweep_steps.is_some() && cfg.algo.is_recurrent() {
        return Err(CliError::Usage(format!("--sweep-steps applies to maml and emaml, not {}", cfg.algo)));
    }
    with_manifest("eval", &out, &cfg, || {
        let tasks = cfg.test_tasks();
        let streams = Streams::eval(cfg.seed, 0);
        let report = evaluate_gap(&policy, &params, cfg.env, &tasks, &cfg.envs, &cfg.inner, &cfg.meta, streams)?;
        let mut rows = String::from("task,layout_seed,pre_return,post_return,gap\n");
        for (i, ((pre, post), task)) in report.per_task.iter().zip(&tasks).enumerate() {
            rows.push_str(&format!("{i},{},{pre},{post},{}\n", task.layout_seed, post - pre));
        }
        write(&out.join("eval.csv"), &rows)?;
        let h = report.heuristics;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        write(
            &out.join("eval_summary.csv"),
            &format!(
                "pre_return,post_return,gap,tile_fraction,death_visits,goals_reached\n{},{},{},{},{},{}\n",
                report.pre,
                report.post,
                report.gap,
                opt(h.map(|h| h.tile_fraction)),
                opt(h.map(|h| h.death_visits)),
                opt(h.map(|h| h.goals_reached)),
            ),
        )?;
        println!("mean gap {:.6} (pre {:.6}, post {:.6})", report.gap, report.pre, report.post);
        if let Some(h) = h {
            println!(
                "tile_fraction {:.4} death_visits {:.4} goals_reached {:.4}",
                h.tile_fraction, h.death_visits, h.goals_reached
            );
        }
        if let Some(n) = sweep_steps {
            let table = grad_steps_sweep(&policy, &params, &tasks, &cfg.envs, &cfg.inner, &cfg.meta, n, streams)?;
            let mut text = String::from("steps,mean_return\n");
            for (k, r) in table {
                text.push_str(&format!("{k},{r}\n"));
            }
            write(&out.join("sweep.csv"), &text)?;
        }
        Ok(())
    })
}

/// Trains every (algo, seed) pair in its own child process.
pub fn sweep(
    config: Option<&Path>,
    over: &Overrides,
    out: Option<PathBuf>,
    algos: &[Algo],
    seeds: &[u64],
) -> Result<(), CliError> {
    let cfg = resolve(config, over)?;
    let out = out.unwrap_or_else(|| PathBuf::from("runs").join(format!("sweep_{}", cfg.env)));
    with_manifest("sweep", &out, &cfg, || {
        let exe = std::env::current_exe().map_err(|e| CliError::Io(e.to_string()))?;
        let shared = out.join("config.toml");
        let mut worst = 0;
        for &algo in algos {
            for &seed in seeds {
                let dir = out.join(format!("{algo}_seed{seed}"));
                let status = Command::new(&exe)
                    .arg("train")
                    .arg("--config")
                    .arg(&shared)
                    .args(["--algo", algo.name(), "--seed", &seed.to_string()])
                    .arg("--out")
                    .arg(&dir)
                    .status()
                    .map_err(|e| CliError::Io(format!("spawning {}: {e}", exe.display())))?;
                let code = status.code().unwrap_or(4);
                println!("{algo} seed {seed}: exit {code}");
                worst = worst.max(code);
            }
        }
        match worst {
            0 => Ok(()),
            c => Err(CliError::Child(c)),
        }
    })
}

pub fn oracle(suite: Suite) -> Result<(), CliError> {
    if std::env::var(INJECT_VAR).is_ok_and(|v| v == "1") {
        metaexp::autodiff::set_tanh_backward_sign_error(true);
    }
    let checks = run_suite(suite);
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.to_string()).collect();
    if failed.is_empty() {
        println!("{} checks passed", checks.len());
        Ok(())
    } else {
        Err(CliError::Oracle(failed))
    }
}
