use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use daenet::experiment::{
    cmd_generate, cmd_oos_denoise, cmd_sweep, cmd_table, cmd_train, exit_code, ExperimentConfig,
    Profile,
};
use daenet::Result;

#[derive(Parser)]
#[command(
    name = "daenet",
    version,
    about = "Constrained RK4 residual networks: data, training and tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// INI experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
    /// Default settings to start from (desk or paper).
    #[arg(long)]
    profile: Option<Profile>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate ground truth and write the dataset.
    Generate(Common),
    /// Train every configured mode, training-set size and seed.
    Train(Common),
    /// Summarize finished runs as CSV and aligned text.
    Table(Common),
    /// Train once per value of the configured gamma or eta list.
    Sweep(Common),
    /// Evaluate trained denoisers at a different test noise level.
    OosDenoise {
        #[command(flatten)]
        common: Common,
        /// Test noise level; defaults to the config's sigma_test.
        #[arg(long)]
        sigma: Option<f64>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config, common.profile)?;
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let path = cmd_generate(&load(&c)?, c.force)?;
            println!("{}", path.display());
        }
        Command::Train(c) => {
            let cfg = load(&c)?;
            let results = cmd_train(&cfg, c.force)?;
            println!(
                "{} runs written under {}",
                results.len(),
                cfg.out.join("runs").display()
            );
        }
        Command::Table(c) => {
            let cfg = load(&c)?;
            print!("{}", cmd_table(&cfg)?.to_text());
        }
        Command::Sweep(c) => {
            let cfg = load(&c)?;
            let results = cmd_sweep(&cfg, c.force)?;
            println!(
                "{} runs; summary in {}",
                results.len(),
                cfg.out.join("sweep_summary.csv").display()
            );
        }
        Command::OosDenoise { common, sigma } => {
            let cfg = load(&common)?;
            let sigma = sigma.unwrap_or(cfg.sigma_test);
            print!("{}", cmd_oos_denoise(&cfg, sigma)?.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
