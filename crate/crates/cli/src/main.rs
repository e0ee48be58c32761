use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use polylab_cli::{report, run, summarize, write_atomic, CliError, CliResult, Experiment, ExperimentConfig};
use polylab_core::{minkowski_norm, sample_ensemble, Ensemble, EnsembleConfig};

#[derive(Parser)]
#[command(name = "polylab", version, about = "Random symmetric polytope experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an ensemble and write it as JSON.
    Sample {
        #[arg(long)]
        n: usize,
        #[arg(long = "big-n")]
        big_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the polytope norm of a vector.
    Norm {
        /// Ensemble JSON written by `sample`.
        #[arg(long)]
        ensemble: PathBuf,
        /// Comma separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        y: String,
    },
    /// Run an experiment and write its report.
    Run(RunArgs),
    /// Print the default configuration of an experiment.
    Defaults { experiment: Experiment },
    /// Merge reports of one experiment into a CSV table.
    Summarize {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    experiment: Option<Experiment>,
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "big-n")]
    big_n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a constant, `key=value`.
    #[arg(long = "set", value_parser = parse_pair)]
    set: Vec<(String, String)>,
    /// Override an option, `key=value`.
    #[arg(long = "option", value_parser = parse_pair)]
    options: Vec<(String, String)>,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got `{s}`"))
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Writes to stdout; a closed pipe (`polylab ... | head`) is not an error.
fn stdout(text: &str) -> CliResult<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(CliError::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => stdout(&format!("{text}\n")),
    }
}

fn build_config(args: RunArgs) -> CliResult<(ExperimentConfig, Option<PathBuf>)> {
    let mut cfg = match (&args.config, args.experiment) {
        (Some(path), exp) => {
            let cfg = ExperimentConfig::from_json(&read(path)?)?;
            if let Some(e) = exp {
                if e != cfg.experiment {
                    return Err(CliError::Config(format!(
                        "config is for `{}`, command line asks for `{e}`",
                        cfg.experiment
                    )));
                }
            }
            cfg
        }
        (None, Some(e)) => ExperimentConfig::new(e, EnsembleConfig::new(20, 40, 0), 10),
        (None, None) => return Err(CliError::Config("give an experiment or --config".into())),
    };
    if let Some(n) = args.n {
        cfg.ensemble.n = n;
    }
    if let Some(big_n) = args.big_n {
        cfg.ensemble.big_n = big_n;
    }
    if let Some(seed) = args.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    for (k, v) in args.set {
        let value: f64 = v
            .parse()
            .map_err(|_| CliError::Config(format!("constant `{k}` needs a number, got `{v}`")))?;
        cfg.constants.insert(k, value);
    }
    for (k, v) in args.options {
        cfg.options.insert(k, v);
    }
    let out = args.out.or_else(|| cfg.output.as_ref().map(PathBuf::from));
    Ok((cfg, out))
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Sample { n, big_n, seed, out } => {
            let e = sample_ensemble(&EnsembleConfig::new(n, big_n, seed))?;
            emit(out.as_deref(), &e.to_json())
        }
        Command::Norm { ensemble, y } => {
            let e = Ensemble::from_json(&read(&ensemble)?)?;
            let coords = y
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|err| CliError::Config(format!("bad vector `{y}`: {err}")))?;
            let cert = minkowski_norm(&e, &DVector::from_vec(coords))?;
            emit(
                None,
                &serde_json::to_string_pretty(&cert).expect("certificate serializes"),
            )
        }
        Command::Run(args) => {
            let (cfg, out) = build_config(args)?;
            let rep = run(cfg)?;
            let text = serde_json::to_string_pretty(&rep).expect("report serializes");
            emit(out.as_deref(), &text)
        }
        Command::Defaults { experiment } => {
            let cfg = ExperimentConfig::new(experiment, EnsembleConfig::new(20, 40, 0), 10).resolve()?;
            emit(None, &serde_json::to_string_pretty(&cfg).expect("config serializes"))
        }
        Command::Summarize { reports, out } => {
            let loaded = reports
                .iter()
                .map(|p| report::read_report(p))
                .collect::<CliResult<Vec<_>>>()?;
            let table = summarize(&loaded)?;
            match out {
                Some(p) => write_atomic(&p, table.as_bytes()),
                None => stdout(&table),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
