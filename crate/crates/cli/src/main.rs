use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::Parser;
use ris_core::harness::{prepare_output, run_experiment, Command, ExperimentConfig};

const EXIT_INVALID_CONFIG: u8 = 3;
const EXIT_UNWRITABLE_OUT: u8 = 4;

/// Runs one seeded experiment recipe and writes CSV curves, summary.json and
/// config.echo to the output directory.
#[derive(Parser, Debug)]
#[command(name = "ris-heuristics", version, args_override_self = true)]
struct Cli {
    #[arg(value_parser = PossibleValuesParser::new(Command::ALL.map(Command::name)))]
    command: String,

    /// key=value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra key=value override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    runs: Option<String>,
    #[arg(long)]
    jobs: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Comma-separated element counts.
    #[arg(long)]
    elements: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    /// Comma-separated algorithm names.
    #[arg(long)]
    algos: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, String> {
    let command: Command = cli.command.parse().map_err(|e| format!("{e}"))?;
    let mut cfg = ExperimentConfig::new(command);
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.apply_file(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("--set expects key=value, got {kv:?}"))?;
        cfg.set(k, v).map_err(|e| e.to_string())?;
    }
    let flags = [
        ("seed", &cli.seed),
        ("runs", &cli.runs),
        ("jobs", &cli.jobs),
        ("out", &cli.out),
        ("elements", &cli.elements),
        ("rho", &cli.rho),
        ("algos", &cli.algos),
        ("iterations", &cli.iterations),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v).map_err(|e| e.to_string())?;
        }
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID_CONFIG);
        }
    };
    if let Err(e) = prepare_output(&cfg.out) {
        eprintln!("error: cannot write to {}: {e}", cfg.out.display());
        return ExitCode::from(EXIT_UNWRITABLE_OUT);
    }
    match run_experiment(&cfg) {
        Ok(record) => {
            for s in &record.summaries {
                let rho = s.target_rho.map_or(String::new(), |r| format!(" rho={r}"));
                println!(
                    "{:<14} N={:<3}{rho} runs={} sum_rate={:.4} (sd {:.4}) ratio={:.4} wall={:.3}s",
                    s.algorithm,
                    s.elements,
                    s.runs,
                    s.mean_sum_rate,
                    s.std_sum_rate,
                    s.mean_ratio_to_exhaustive,
                    s.mean_wall_clock_seconds
                );
            }
            if !record.extra.as_object().is_some_and(|o| o.is_empty()) {
                println!("{}", record.extra);
            }
            println!("results written to {}", cfg.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
