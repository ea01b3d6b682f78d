use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use viskv::app::{run, AppError, RunConfig, Scenario};

#[derive(Debug, Parser)]
#[command(name = "viskv", version, about = "Delayed Kelvin-Voigt viscoelastic rod solver")]
struct Cli {
    /// flux | modes | simulate | oracle | energy | stability-check | stability-region | singular-limit
    scenario: String,
    /// key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// override a config key, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// write CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// fit an exponential decay rate to the energy trace
    #[arg(long)]
    fit: bool,
}

fn main_inner(cli: Cli) -> Result<(), AppError> {
    let scenario = Scenario::parse(&cli.scenario)
        .ok_or_else(|| AppError::Config(format!("unknown scenario {:?}", cli.scenario)))?;
    let text = cli.config.as_ref().map(std::fs::read_to_string).transpose()?;
    let mut cfg = RunConfig::from_sources(Some(scenario), text.as_deref(), &cli.sets)?;
    cfg.fit |= cli.fit;
    let out = run(&cfg)?;
    match &cli.out {
        Some(path) => {
            std::fs::write(path, &out.csv)?;
            for (k, v) in &out.summary {
                println!("{k} = {v}");
            }
        }
        None => print!("{}", out.csv),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("viskv: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
