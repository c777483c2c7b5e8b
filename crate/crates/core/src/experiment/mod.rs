//! Config-driven experiment commands: dataset generation, training grids,
//! result tables, strength sweeps and out-of-sample denoising.

mod config;
mod problem;
mod run;
mod table;

pub use config::{ExperimentConfig, ModeKind, Problem, Profile, SweepParameter};
pub use problem::{
    eval_noise, generate_dataset, network_dims, train_noise, Setup, MOLECULE_MODEL_UNIT,
};
pub use run::{
    execute_all, execute_run, read_test_eval, run_label, seed_dir, summary_csv, train_config,
    worker_threads, RunResult, RunSpec, SUMMARY_HEADER,
};
pub use table::{Cell, Metric, Table};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::datagen::{Dataset, Split};
use crate::error::{Error, Result};
use crate::network::read_checkpoint;
use crate::training::{eval_csv, evaluate, EvalOptions, LossConfig};

pub const DATASET_FILE: &str = "dataset.bin";
pub const CONFIG_ECHO: &str = "config.ini";

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Invalid { .. } | Error::Exists(_) => 2,
        Error::TrainingAborted { .. } => 3,
        Error::MissingInput(_) => 4,
        _ => 1,
    }
}

pub fn dataset_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.join(DATASET_FILE)
}

fn write_config_echo(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(CONFIG_ECHO), cfg.to_ini())?;
    Ok(())
}

fn refuse_existing(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Exists(path.to_path_buf()));
    }
    Ok(())
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Write the dataset, its CSV mirror and a provenance sidecar.
pub fn cmd_generate(cfg: &ExperimentConfig, force: bool) -> Result<PathBuf> {
    let path = dataset_path(cfg);
    refuse_existing(&path, force)?;
    let data = generate_dataset(cfg)?;
    std::fs::create_dir_all(&cfg.out)?;
    data.write(&path)?;
    data.write_csv(&path.with_extension("csv"))?;
    let mut prov = String::new();
    writeln!(prov, "problem = {}", cfg.problem.name()).unwrap();
    writeln!(prov, "seed = {}", cfg.data_seed).unwrap();
    writeln!(prov, "code = {}", git_describe()).unwrap();
    writeln!(prov, "samples = {}", data.len()).unwrap();
    writeln!(prov, "input_dim = {}", data.input_dim).unwrap();
    writeln!(prov, "output_dim = {}", data.output_dim).unwrap();
    writeln!(prov, "k = {}", data.k).unwrap();
    prov.push('\n');
    prov.push_str(&cfg.to_ini());
    std::fs::write(path.with_extension("provenance"), prov)?;
    write_config_echo(cfg, &cfg.out)?;
    log::info!("wrote {} samples to {}", data.len(), path.display());
    Ok(path)
}

/// Dataset converted to model units.
pub fn load_dataset(cfg: &ExperimentConfig, setup: &Setup) -> Result<Dataset> {
    let mut data = Dataset::read(&dataset_path(cfg))?;
    setup.to_model_units(&mut data);
    if data.output_dim != setup.spec.state_len() {
        return Err(Error::Config(format!(
            "dataset output dimension {} does not match the configured constraint ({})",
            data.output_dim,
            setup.spec.state_len()
        )));
    }
    Ok(data)
}

pub fn runs_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.join("runs")
}

/// Train every `mode × n_train × seed` cell of the config.
pub fn cmd_train(cfg: &ExperimentConfig, force: bool) -> Result<Vec<RunResult>> {
    let setup = Setup::new(cfg)?;
    let data = load_dataset(cfg, &setup)?;
    let mut runs = Vec::new();
    for &kind in &cfg.modes {
        for &n in &cfg.n_train {
            let label_dir = runs_dir(cfg).join(run_label(kind, n));
            for &seed in &cfg.seeds {
                let dir = seed_dir(&label_dir, seed);
                refuse_existing(&dir, force)?;
                runs.push(RunSpec {
                    kind,
                    gamma: cfg.gamma,
                    eta: cfg.eta,
                    n_train: n,
                    seed,
                    dir,
                });
            }
        }
    }
    write_config_echo(cfg, &cfg.out)?;
    let results = execute_all(cfg, &setup, &data, &runs)?;
    for &kind in &cfg.modes {
        for &n in &cfg.n_train {
            let label_dir = runs_dir(cfg).join(run_label(kind, n));
            let group: Vec<&RunResult> = results
                .iter()
                .filter(|r| r.run.kind == kind && r.run.n_train == n)
                .collect();
            std::fs::write(label_dir.join("summary.csv"), summary_csv(&group))?;
            write_config_echo(cfg, &label_dir)?;
        }
    }
    Ok(results)
}

fn table_metric(cfg: &ExperimentConfig) -> Metric {
    match cfg.problem {
        Problem::Denoise => Metric::Mse,
        _ => Metric::Mae,
    }
}

/// Collect finished runs into a comparison table; missing runs are gaps.
pub fn collect_table(cfg: &ExperimentConfig) -> Result<Table> {
    let setup = Setup::new(cfg)?;
    let mut cells = Vec::new();
    for &mode in &cfg.modes {
        for &n in &cfg.n_train {
            let label_dir = runs_dir(cfg).join(run_label(mode, n));
            let mut cell = Cell {
                mode,
                n_train: n,
                runs: Vec::new(),
                missing_seeds: Vec::new(),
            };
            for &seed in &cfg.seeds {
                match read_test_eval(&seed_dir(&label_dir, seed).join("eval.csv"))? {
                    Some(e) => cell.runs.push((seed, e)),
                    None => cell.missing_seeds.push(seed),
                }
            }
            cells.push(cell);
        }
    }
    Ok(Table {
        metric: table_metric(cfg),
        unit: setup.report_unit.to_string(),
        modes: cfg.modes.clone(),
        n_train: cfg.n_train.clone(),
        cells,
    })
}

/// Write `table.csv` and `table.txt` into the output directory.
pub fn cmd_table(cfg: &ExperimentConfig) -> Result<Table> {
    let table = collect_table(cfg)?;
    if table.cells.iter().all(|c| c.runs.is_empty()) {
        return Err(Error::MissingInput(runs_dir(cfg)));
    }
    for c in table.cells.iter().filter(|c| !c.missing_seeds.is_empty()) {
        log::warn!(
            "{} n={}: no results for seeds {:?}",
            c.mode.name(),
            c.n_train,
            c.missing_seeds
        );
    }
    std::fs::write(cfg.out.join("table.csv"), table.to_csv())?;
    std::fs::write(cfg.out.join("table.txt"), table.to_text())?;
    Ok(table)
}

pub fn sweep_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.join("sweep")
}

/// Train the first configured mode once per sweep value and seed.
pub fn cmd_sweep(cfg: &ExperimentConfig, force: bool) -> Result<Vec<RunResult>> {
    if cfg.sweep_values.is_empty() {
        return Err(Error::Config("sweep values must not be empty".into()));
    }
    let setup = Setup::new(cfg)?;
    let data = load_dataset(cfg, &setup)?;
    let kind = cfg.modes[0];
    let n = cfg.n_train[0];
    let param = cfg.sweep_parameter;
    let mut runs = Vec::new();
    for &value in &cfg.sweep_values {
        let (gamma, eta) = match param {
            SweepParameter::Gamma => (value, cfg.eta),
            SweepParameter::Eta => (cfg.gamma, value),
        };
        let value_dir = sweep_dir(cfg).join(format!("{}_{value}", param.name()));
        for &seed in &cfg.seeds {
            let dir = seed_dir(&value_dir, seed);
            refuse_existing(&dir, force)?;
            runs.push(RunSpec {
                kind,
                gamma,
                eta,
                n_train: n,
                seed,
                dir,
            });
        }
    }
    write_config_echo(cfg, &sweep_dir(cfg))?;
    let results = execute_all(cfg, &setup, &data, &runs)?;

    let value_of = |r: &RunResult| match param {
        SweepParameter::Gamma => r.run.gamma,
        SweepParameter::Eta => r.run.eta,
    };
    let mut summary = String::from("mode,parameter,value,seed,mae,mse,cv_mean,cv_max,raw_cv_max\n");
    let mut curves = String::from("parameter,value,seed,epoch,split,mae,mse,cv_mean,cv_max,loss\n");
    for r in &results {
        let t = &r.test;
        writeln!(
            summary,
            "{},{},{},{},{},{},{},{},{}",
            kind.name(),
            param.name(),
            value_of(r),
            r.run.seed,
            t.mae,
            t.mse,
            t.cv_mean,
            t.cv_max,
            t.raw_cv_max
        )
        .unwrap();
        for c in &r.curves {
            let e = &c.report;
            writeln!(
                curves,
                "{},{},{},{},{},{},{},{},{},{}",
                param.name(),
                value_of(r),
                r.run.seed,
                c.epoch,
                e.split.name(),
                e.mae,
                e.mse,
                e.cv_mean,
                e.cv_max,
                e.loss
            )
            .unwrap();
        }
    }
    std::fs::write(cfg.out.join("sweep_summary.csv"), summary)?;
    std::fs::write(cfg.out.join("sweep_curves.csv"), curves)?;
    Ok(results)
}

/// Evaluate trained denoisers on test inputs with noise level `sigma_test`.
/// Uses the first `n_train` of the config; writes per-run and table output
/// under `oos/sigma_<σ>/`.
pub fn cmd_oos_denoise(cfg: &ExperimentConfig, sigma_test: f64) -> Result<Table> {
    if cfg.problem != Problem::Denoise {
        return Err(Error::Config("oos-denoise needs problem = denoise".into()));
    }
    if !(sigma_test >= 0.0) || !sigma_test.is_finite() {
        return Err(Error::Config(format!(
            "sigma_test {sigma_test} must be >= 0"
        )));
    }
    let setup = Setup::new(cfg)?;
    let data = load_dataset(cfg, &setup)?;
    let n = cfg.n_train[0];
    let out_dir = cfg.out.join("oos").join(format!("sigma_{sigma_test}"));
    std::fs::create_dir_all(&out_dir)?;
    let opts = EvalOptions {
        report_scale: setup.report_scale,
        noise: eval_noise(cfg, sigma_test),
    };
    let mut cells = Vec::new();
    for &kind in &cfg.modes {
        let label_dir = runs_dir(cfg).join(run_label(kind, n));
        let mode = cfg.mode(kind, setup.model_scale);
        let loss_cfg = LossConfig {
            base: cfg.base_loss,
            eta: mode.eta(),
        };
        let mut cell = Cell {
            mode: kind,
            n_train: n,
            runs: Vec::new(),
            missing_seeds: Vec::new(),
        };
        for &seed in &cfg.seeds {
            let ckpt = seed_dir(&label_dir, seed).join("params.ckpt");
            if !ckpt.exists() {
                cell.missing_seeds.push(seed);
                continue;
            }
            let params = read_checkpoint(&ckpt)?;
            let report = evaluate(
                &params,
                &data,
                Split::Test,
                &mode,
                &setup.spec,
                &loss_cfg,
                &opts,
            )?;
            let run_dir = seed_dir(&out_dir.join(run_label(kind, n)), seed);
            std::fs::create_dir_all(&run_dir)?;
            std::fs::write(
                run_dir.join("eval.csv"),
                eval_csv(std::slice::from_ref(&report)),
            )?;
            cell.runs.push((seed, report));
        }
        cells.push(cell);
    }
    if cells.iter().all(|c| c.runs.is_empty()) {
        return Err(Error::MissingInput(runs_dir(cfg)));
    }
    let table = Table {
        metric: Metric::Mse,
        unit: setup.report_unit.to_string(),
        modes: cfg.modes.clone(),
        n_train: vec![n],
        cells,
    };
    std::fs::write(out_dir.join("table.csv"), table.to_csv())?;
    std::fs::write(out_dir.join("table.txt"), table.to_text())?;
    write_config_echo(cfg, &out_dir)?;
    Ok(table)
}
