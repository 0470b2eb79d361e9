use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nearfield_squint::cli_io::{
    cmd_gainmap, cmd_localize, cmd_rmse, cmd_trajectory, CliError, CommandReport, Overrides, ScenarioFile,
    EXIT_CONFIG,
};

#[derive(Parser)]
#[command(name = "squint", version, about = "Near-field beam squint trajectories and localization")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Squint point of every subcarrier, plus the delay range.
    Trajectory(Common),
    /// Normalized gain heatmaps on the oracle grid.
    Gainmap(Common),
    /// Two-stage localization of the listed users.
    Localize(Common),
    /// Monte Carlo RMSE versus SNR.
    Rmse(Common),
}

#[derive(clap::Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `noise.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Forces noiseless measurements.
    #[arg(long)]
    noiseless: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

type Handler = fn(&ScenarioFile, &std::path::Path) -> Result<CommandReport, CliError>;

fn run(args: Args) -> Result<i32, CliError> {
    let (c, cmd): (Common, Handler) = match args.command {
        Command::Trajectory(c) => (c, cmd_trajectory),
        Command::Gainmap(c) => (c, cmd_gainmap),
        Command::Localize(c) => (c, cmd_localize),
        Command::Rmse(c) => (c, cmd_rmse),
    };
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let mut scenario = ScenarioFile::load(&c.scenario).map_err(|e| match e {
        CliError::Io { path, source } => CliError::Config(format!("cannot read {}: {source}", path.display())),
        other => other,
    })?;
    Overrides {
        seed: c.seed,
        noiseless: c.noiseless,
    }
    .apply(&mut scenario);
    let report = cmd(&scenario, &c.out)?;
    for f in &report.files {
        println!("{}", f.display());
    }
    Ok(report.exit_code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let code = run(args).unwrap_or_else(|e| {
        eprintln!("squint: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
