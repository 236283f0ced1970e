//! The meta-training loop and curve output.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use super::eval::evaluate_gap;
use super::HarnessError;
use crate::metaalgos::{MetaLearner, Streams};
use crate::policy::{save_checkpoint, ParamVector};

pub const CURVE_HEADER: &str = "env_steps,algo,env,seed,pre_return,post_return,gap,tile_fraction,death_visits,goals_reached";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    /// Training env steps consumed so far.
    pub env_steps: u64,
    pub algo: String,
    pub env: String,
    pub seed: u64,
    pub pre_return: f64,
    pub post_return: f64,
    pub gap: f64,
    pub tile_fraction: Option<f64>,
    pub death_visits: Option<f64>,
    pub goals_reached: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatResult {
    pub seed: u64,
    pub curve: Vec<CurvePoint>,
    pub params: ParamVector,
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub repeats: Vec<RepeatResult>,
    /// Point-wise mean over repeats, truncated to the shortest repeat.
    pub curve: Vec<CurvePoint>,
}

/// Rayon pool capped by `threads`, or by `METAEXP_THREADS` when `None`.
pub fn worker_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, HarnessError> {
    let n = match threads {
        Some(n) => n,
        None => match std::env::var("METAEXP_THREADS") {
            Ok(v) => v.trim().parse::<usize>().map_err(|_| {
                HarnessError::Config(crate::metaalgos::ConfigError {
                    key: "METAEXP_THREADS".into(),
                    reason: format!("`{v}` is not a worker count"),
                })
            })?,
            Err(_) => 0,
        },
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| HarnessError::Contract(format!("worker pool: {e}")))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, HarnessError> {
    let file = File::create(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
    Ok(csv::WriterBuilder::new().has_headers(true).from_writer(file))
}

fn write_point(w: &mut csv::Writer<File>, p: &CurvePoint) -> Result<(), HarnessError> {
    w.serialize(p)?;
    w.flush().map_err(|source| HarnessError::Io { path: PathBuf::from("curve"), source })
}

/// Serialises a curve to CSV text.
pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    if points.is_empty() {
        return format!("{CURVE_HEADER}\n");
    }
    for p in points {
        w.serialize(p).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

/// Reads a curve CSV back.
pub fn read_curve(path: &Path) -> Result<Vec<CurvePoint>, HarnessError> {
    #[derive(serde::Deserialize)]
    struct Row {
        env_steps: u64,
        algo: String,
        env: String,
        seed: u64,
        pre_return: f64,
        post_return: f64,
        gap: f64,
        tile_fraction: Option<f64>,
        death_visits: Option<f64>,
        goals_reached: Option<f64>,
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<Row>()
        .map(|row| {
            let row = row?;
            Ok(CurvePoint {
                env_steps: row.env_steps,
                algo: row.algo,
                env: row.env,
                seed: row.seed,
                pre_return: row.pre_return,
                post_return: row.post_return,
                gap: row.gap,
                tile_fraction: row.tile_fraction,
                death_visits: row.death_visits,
                goals_reached: row.goals_reached,
            })
        })
        .collect()
}

fn evaluate(cfg: &ExperimentConfig, learner: &MetaLearner, steps: u64, seed: u64) -> Result<CurvePoint, HarnessError> {
    let tasks = cfg.test_tasks();
    let streams = Streams::eval(learner.seed, learner.iteration());
    let g = evaluate_gap(&learner.policy, &learner.params, cfg.env, &tasks, &cfg.envs, &learner.inner, &learner.meta, streams)?;
    let h = g.heuristics;
    Ok(CurvePoint {
        env_steps: steps,
        algo: cfg.algo.to_string(),
        env: cfg.env.to_string(),
        seed,
        pre_return: g.pre,
        post_return: g.post,
        gap: g.gap,
        tile_fraction: h.map(|h| h.tile_fraction),
        death_visits: h.map(|h| h.death_visits),
        goals_reached: h.map(|h| h.goals_reached),
    })
}

/// Trains one repeat until the step budget is spent, evaluating on the test
/// pool before training, every `eval_every` iterations and at the end.
/// Points are appended to `csv_path` as they are produced.
pub fn run_repeat(cfg: &ExperimentConfig, r: usize, csv_path: Option<&Path>) -> Result<RepeatResult, HarnessError> {
    let seed = cfg.repeat_seed(r);
    let (inner, meta) = cfg.repeat_hypers(r);
    let mut learner = MetaLearner::new(cfg.algo, cfg.env, &cfg.policy, cfg.envs.clone(), inner, meta, seed);
    let train = cfg.train_tasks();
    let mut writer = csv_path.map(csv_writer).transpose()?;
    let mut curve = Vec::new();
    let mut push = |p: CurvePoint, curve: &mut Vec<CurvePoint>| -> Result<(), HarnessError> {
        if let Some(w) = writer.as_mut() {
            write_point(w, &p)?;
        }
        curve.push(p);
        Ok(())
    };
    let mut steps = 0u64;
    push(evaluate(cfg, &learner, steps, cfg.seed)?, &mut curve)?;
    while steps < cfg.budget {
        let stats = learner.meta_step(&train)?;
        steps += stats.env_steps;
        log::debug!(
            "repeat {r} iter {} steps {steps} explore {:.4} exploit {:.4} grad {:.4}",
            learner.iteration(),
            stats.explore_return,
            stats.exploit_return,
            stats.pre_clip_norm
        );
        if learner.iteration().is_multiple_of(cfg.eval_every) || steps >= cfg.budget {
            push(evaluate(cfg, &learner, steps, cfg.seed)?, &mut curve)?;
        }
    }
    Ok(RepeatResult { seed, curve, iterations: learner.iteration(), params: learner.params })
}

/// Point-wise arithmetic mean over repeats, truncated to the shortest curve.
/// Step counts are averaged with integer division.
pub fn average_curves(curves: &[Vec<CurvePoint>]) -> Vec<CurvePoint> {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    let n = curves.len() as f64;
    let avg = |f: &dyn Fn(&CurvePoint) -> f64, i: usize| curves.iter().map(|c| f(&c[i])).sum::<f64>() / n;
    let avg_opt = |f: &dyn Fn(&CurvePoint) -> Option<f64>, i: usize| {
        curves.iter().map(|c| f(&c[i])).sum::<Option<f64>>().map(|s| s / n)
    };
    (0..len)
        .map(|i| CurvePoint {
            env_steps: curves.iter().map(|c| c[i].env_steps).sum::<u64>() / curves.len() as u64,
            algo: curves[0][i].algo.clone(),
            env: curves[0][i].env.clone(),
            seed: curves[0][i].seed,
            pre_return: avg(&|p| p.pre_return, i),
            post_return: avg(&|p| p.post_return, i),
            gap: avg(&|p| p.gap, i),
            tile_fraction: avg_opt(&|p| p.tile_fraction, i),
            death_visits: avg_opt(&|p| p.death_visits, i),
            goals_reached: avg_opt(&|p| p.goals_reached, i),
        })
        .collect()
}

/// Runs every repeat, writing `curve_repeat<r>.csv` files, the averaged
/// `curve.csv` and `checkpoint.bin` (final parameters of repeat 0) into
/// `out` when given.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    threads: Option<usize>,
) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.to_path_buf(), source })?;
    }
    let pool = worker_pool(threads)?;
    pool.install(|| {
        let mut repeats = Vec::with_capacity(cfg.repeats);
        for r in 0..cfg.repeats {
            let path = out.map(|d| d.join(format!("curve_repeat{r}.csv")));
            let res = run_repeat(cfg, r, path.as_deref())?;
            if let Some(dir) = out {
                let name = if r == 0 { "checkpoint.bin".to_string() } else { format!("checkpoint_repeat{r}.bin") };
                save_checkpoint(&dir.join(name), &res.params)?;
            }
            repeats.push(res);
        }
        let curve = average_curves(&repeats.iter().map(|r| r.curve.clone()).collect::<Vec<_>>());
        if let Some(dir) = out {
            let path = dir.join("curve.csv");
            let mut f = File::create(&path).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
            f.write_all(curve_csv(&curve).as_bytes()).map_err(|source| HarnessError::Io { path, source })?;
        }
        Ok(ExperimentResult { repeats, curve })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(steps: u64, pre: f64, tf: Option<f64>) -> CurvePoint {
        CurvePoint {
            env_steps: steps,
            algo: "maml".into(),
            env: "krazy".into(),
            seed: 0,
            pre_return: pre,
            post_return: 2.0 * pre,
            gap: pre,
            tile_fraction: tf,
            death_visits: tf,
            goals_reached: tf,
        }
    }

    #[test]
    fn header_matches_and_missing_metrics_are_empty() {
        let text = curve_csv(&[point(10, 0.5, None)]);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CURVE_HEADER));
        assert_eq!(lines.next(), Some("10,maml,krazy,0,0.5,1.0,0.5,,,"));
        assert_eq!(curve_csv(&[]).trim_end(), CURVE_HEADER);
    }

    #[test]
    fn averaging_is_pointwise_and_truncates() {
        let a = vec![point(0, 0.1, Some(0.25)), point(100, 0.3, Some(0.5))];
        let b = vec![point(0, 0.2, Some(0.75)), point(120, 0.6, Some(1.0)), point(300, 9.0, None)];
        let avg = average_curves(&[a, b]);
        assert_eq!(avg.len(), 2);
        assert_eq!(avg[1].env_steps, 110);
        assert!((avg[1].pre_return - 0.45).abs() < 1e-15);
        assert_eq!(avg[0].tile_fraction, Some(0.5));
    }

    #[test]
    fn csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let pts = vec![point(0, 0.1, None), point(5, 0.7, Some(0.125))];
        fs::write(&path, curve_csv(&pts)).unwrap();
        assert_eq!(read_curve(&path).unwrap(), pts);
    }
}
