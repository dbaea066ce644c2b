use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::error;

use vibronic_core::parallel::configure_threads;
use vibronic_core::pipeline::{self, config::ENV_PREFIX, diff_goldens, RunConfig, Tolerances};
use vibronic_core::potentials::format_softening_cache;

/// Electron-nuclear entanglement of vibronic states in one-dimensional
/// molecular models.
#[derive(Parser)]
#[command(name = "vibronic", version)]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Base {
    E,
    #[value(name = "2")]
    Two,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    H2p,
    ShinMetiu,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model, overriding the config file.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Extra `section.key=value` overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline and write CSV outputs.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Logarithm base for reported entropies.
        #[arg(long, value_enum)]
        entropy_base: Option<Base>,
    },
    /// Compare an output directory against golden CSV files.
    DiffGoldens {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        golden: PathBuf,
        /// TOML with `default` and a `[columns]` table of absolute tolerances.
        #[arg(long)]
        tolerances: Option<PathBuf>,
    },
    /// Calibrate the H2+ softening table and write it as a cache file.
    CalibrateSoftening {
        #[command(flatten)]
        config: ConfigArgs,
        /// Destination file.
        #[arg(long)]
        output: PathBuf,
    },
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<vibronic_core::Error> for Failure {
    fn from(e: vibronic_core::Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Run(e.to_string())
        }
    }
}

fn load_config(args: &ConfigArgs, extra: Vec<(String, String)>) -> Result<RunConfig, Failure> {
    let mut env: Vec<(String, String)> = std::env::vars().collect();
    if let Some(m) = args.model {
        let name = match m {
            ModelArg::H2p => "h2p",
            ModelArg::ShinMetiu => "shin_metiu",
        };
        env.push((format!("{ENV_PREFIX}MODEL__NAME"), name.into()));
    }
    for o in &args.overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("override \"{o}\" is not KEY=VALUE")))?;
        let (section, field) = key
            .trim()
            .split_once('.')
            .ok_or_else(|| Failure::Config(format!("override key \"{key}\" is not section.key")))?;
        env.push((format!("{ENV_PREFIX}{section}__{field}"), value.trim().into()));
    }
    env.extend(extra);
    RunConfig::load(args.config.as_deref(), env).map_err(|e| Failure::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.threads > 0 {
        configure_threads(cli.threads).map_err(Failure::Run)?;
    }
    match cli.command {
        Command::Run { config, out, entropy_base } => {
            let mut extra = Vec::new();
            if let Some(out) = out {
                extra.push((format!("{ENV_PREFIX}OUTPUT__DIR"), format!("{:?}", out.display().to_string())));
            }
            if let Some(b) = entropy_base {
                let v = match b {
                    Base::E => "e",
                    Base::Two => "2",
                };
                extra.push((format!("{ENV_PREFIX}ANALYSIS__ENTROPY_BASE"), format!("\"{v}\"")));
            }
            let cfg = load_config(&config, extra)?;
            let report = pipeline::run(&cfg)?;
            println!("{report}");
        }
        Command::DiffGoldens { out, golden, tolerances } => {
            let tol = match tolerances {
                Some(p) => Tolerances::load(&p).map_err(|e| Failure::Config(e.to_string()))?,
                None => Tolerances::default(),
            };
            let report = diff_goldens(&out, &golden, &tol)?;
            print!("{report}");
            if !report.passed() {
                return Err(Failure::Run("outputs differ from goldens".into()));
            }
        }
        Command::CalibrateSoftening { config, output } => {
            let cfg = load_config(&config, Vec::new())?;
            let (table, hash) = pipeline::calibrate(&cfg)?;
            write_file(&output, &format_softening_cache(&table, &hash))?;
            println!("wrote {} rows to {}", table.rows().len(), output.display());
        }
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            error!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            error!("{msg}");
            ExitCode::from(1)
        }
    }
}
