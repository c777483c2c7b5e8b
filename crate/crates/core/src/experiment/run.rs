use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, ModeKind};
use super::problem::{eval_noise, network_dims, train_noise, Setup};
use crate::datagen::{Dataset, Split};
use crate::error::{Error, Result};
use crate::network::{init_params, write_checkpoint, ConstraintMode};
use crate::training::{
    eval_csv, evaluate, train, write_metrics_csv, EpochRecord, EvalReport, LossConfig, TrainConfig,
};

/// One training run: a mode with its strengths, a training-set size and a
/// seed, writing into `dir`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub kind: ModeKind,
    pub gamma: f64,
    pub eta: f64,
    pub n_train: usize,
    pub seed: u64,
    pub dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: RunSpec,
    pub train: EvalReport,
    pub val: EvalReport,
    pub test: EvalReport,
    pub curves: Vec<EpochRecord>,
}

impl RunResult {
    pub fn report(&self, split: Split) -> &EvalReport {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

pub fn run_label(kind: ModeKind, n_train: usize) -> String {
    format!("{}_n{n_train}", kind.name())
}

pub fn seed_dir(parent: &Path, seed: u64) -> PathBuf {
    parent.join(format!("seed_{seed}"))
}

pub fn train_config(cfg: &ExperimentConfig, setup: &Setup, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        repeats: cfg.seeds.len(),
        seed,
        clip_norm: cfg.clip_norm,
        input_noise: train_noise(cfg, seed),
        eval_noise: eval_noise(cfg, cfg.sigma),
        report_scale: setup.report_scale,
        record_wall_time: cfg.record_wall_time,
    }
}

pub fn mode_for(cfg: &ExperimentConfig, setup: &Setup, run: &RunSpec) -> ConstraintMode {
    cfg.mode_with(run.kind, run.gamma, run.eta, setup.model_scale)
}

/// Train one network on a model-unit dataset and write its checkpoint,
/// per-epoch metrics and final evaluation into `run.dir`.
pub fn execute_run(
    cfg: &ExperimentConfig,
    setup: &Setup,
    data: &Dataset,
    run: &RunSpec,
) -> Result<RunResult> {
    let data = data.limit_train(run.n_train)?;
    let mode = mode_for(cfg, setup, run);
    let tcfg = train_config(cfg, setup, run.seed);
    let loss_cfg = LossConfig {
        base: cfg.base_loss,
        eta: mode.eta(),
    };
    let params = init_params(run.seed, network_dims(cfg, &data), cfg.initial_step)?;
    std::fs::create_dir_all(&run.dir)?;
    let outcome = match train(params, &data, &mode, &setup.spec, &tcfg, &loss_cfg) {
        Ok(o) => o,
        Err(Error::TrainingAborted {
            epoch,
            batch,
            last_good,
        }) => {
            write_checkpoint(&run.dir.join("params.last_good.ckpt"), &last_good)?;
            return Err(Error::TrainingAborted {
                epoch,
                batch,
                last_good,
            });
        }
        Err(e) => return Err(e),
    };
    write_checkpoint(&run.dir.join("params.ckpt"), &outcome.params)?;
    write_metrics_csv(&run.dir.join("metrics.csv"), &outcome.curves)?;

    let opts = tcfg.eval_options();
    let reports = Split::ALL
        .iter()
        .map(|&s| {
            evaluate(
                &outcome.params,
                &data,
                s,
                &mode,
                &setup.spec,
                &loss_cfg,
                &opts,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    std::fs::write(run.dir.join("eval.csv"), eval_csv(&reports))?;
    let mut it = reports.into_iter();
    let (train, val, test) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
    log::info!(
        "{} seed {}: test mae {:.4} {}, cv_max {:.3e}",
        run.dir.display(),
        run.seed,
        test.mae,
        setup.report_unit,
        test.cv_max
    );
    Ok(RunResult {
        run: run.clone(),
        train,
        val,
        test,
        curves: outcome.curves,
    })
}

/// Worker count from `DAENET_THREADS`, defaulting to the core count.
pub fn worker_threads() -> usize {
    std::env::var("DAENET_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|n: &usize| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Execute independent runs on a worker pool; results keep input order.
pub fn execute_all(
    cfg: &ExperimentConfig,
    setup: &Setup,
    data: &Dataset,
    runs: &[RunSpec],
) -> Result<Vec<RunResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads())
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| {
        runs.par_iter()
            .map(|r| execute_run(cfg, setup, data, r))
            .collect()
    })
}

pub const SUMMARY_HEADER: &str = "seed,samples,mae,mse,cv_mean,cv_max,raw_cv_mean,raw_cv_max";

/// Per-seed test metrics followed by their mean.
pub fn summary_csv(results: &[&RunResult]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    let row = |e: &EvalReport| {
        [
            e.mae,
            e.mse,
            e.cv_mean,
            e.cv_max,
            e.raw_cv_mean,
            e.raw_cv_max,
        ]
    };
    let mut sum = [0.0; 6];
    for r in results {
        let vals = row(&r.test);
        write!(out, "{},{}", r.run.seed, r.test.samples).unwrap();
        for (s, v) in sum.iter_mut().zip(vals) {
            *s += v;
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    if !results.is_empty() {
        write!(out, "mean,{}", results[0].test.samples).unwrap();
        for s in sum {
            write!(out, ",{}", s / results.len() as f64).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Read the test row of an `eval.csv`.
pub fn read_test_eval(path: &Path) -> Result<Option<EvalReport>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let format = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let line = text
        .lines()
        .find(|l| l.starts_with("test,"))
        .ok_or_else(|| format("no test row"))?;
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 11 {
        return Err(format("expected 11 columns"));
    }
    let num = |i: usize| f[i].parse::<f64>().map_err(|_| format("bad number"));
    Ok(Some(EvalReport {
        split: Split::Test,
        samples: f[1].parse().map_err(|_| format("bad count"))?,
        mae: num(2)?,
        mse: num(3)?,
        cv_mean: num(4)?,
        cv_max: num(5)?,
        raw_cv_mean: num(6)?,
        raw_cv_max: num(7)?,
        loss: num(8)?,
        converged: f[9].parse().map_err(|_| format("bad count"))?,
        mean_projection_iters: num(10)?,
    }))
}
