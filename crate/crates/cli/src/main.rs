use std::path::PathBuf;
use std::process::ExitCode;

use atomnum_cli::output::{DEFAULT_OUT, OUT_ENV};
use atomnum_cli::{execute, Command, LoadedConfig, RunOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "atomnum", version, about = "Seeded atom-number measurement scenarios with CSV/JSON output")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Number of replicates (overrides `replicates`).
    #[arg(long, global = true, value_name = "N")]
    replicates: Option<usize>,
    /// Output base directory (overrides `output_dir`).
    #[arg(long, global = true, value_name = "DIR", env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    svg: bool,
    /// Override one config key, e.g. `--set filter.steps=100`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Allan deviation of the simulated probe phase per probe power.
    Allan,
    /// Ground-truth loss trajectories and phase records.
    Simulate,
    /// Simulate and run the Bayesian atom-number filter.
    Filter,
    /// Fit an optical-pumping transient for the absolute atom number.
    Calibrate {
        /// Fit this CSV (columns t_s, transmission) instead of synthetic data.
        #[arg(long, value_name = "CSV")]
        input: Option<PathBuf>,
    },
    /// Closed-form measurement budget.
    Budget,
    /// Filter minimum Fano factor against initial atom number.
    Sweep,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut overrides = cli.set.clone();
    let command = match &cli.command {
        Cmd::Allan => Command::Allan,
        Cmd::Simulate => Command::Simulate,
        Cmd::Filter => Command::Filter,
        Cmd::Calibrate { input } => {
            if let Some(input) = input {
                let abs = std::path::absolute(input).unwrap_or_else(|_| input.clone());
                overrides.push(format!("calib.input={}", toml_string(&abs.to_string_lossy())));
                overrides.push("calib.mode=\"data\"".into());
            }
            Command::Calibrate
        }
        Cmd::Budget => Command::Budget,
        Cmd::Sweep => Command::Sweep,
    };

    let result = LoadedConfig::load(cli.config.as_deref(), &overrides).and_then(|mut loaded| {
        if let Some(seed) = cli.seed {
            loaded.config.seed = seed;
        }
        if let Some(r) = cli.replicates {
            loaded.config.replicates = r;
        }
        let out_base = cli
            .out
            .clone()
            .or_else(|| loaded.config.output_dir.as_ref().map(|p| loaded.resolve_path(p)))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        execute(command, &loaded, &RunOptions { out_base, svg: cli.svg })
    });

    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            println!("wrote {}", outcome.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("atomnum: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn toml_string(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}
