use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use multiairfed::harness::{
    analytic_table, bound_table, config_help, latency_table, run_experiment, validate, SimConfig, Table,
};

#[derive(Parser, Debug)]
#[command(name = "multiairfed", version, about = "Over-the-air hierarchical federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory (simulate, validate).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Plain Poisson parents without hard-core thinning.
    #[arg(long, global = true)]
    no_hardcore: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Seeded training trials; writes rounds.csv, summary.csv, trials.csv.
    Simulate,
    /// ρ, Ψ, β, activity moments and error bounds.
    Analytic,
    /// Optimality-gap bound for a quadratic task.
    Bound,
    /// Monte Carlo versus closed-form checks; nonzero exit on failure.
    Validate,
    /// Communication latency of the configured schedule.
    Latency,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Text,
    Csv,
}

fn load(cli: &Cli) -> Result<SimConfig, String> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?,
        None => String::new(),
    };
    let mut cfg = SimConfig::parse(&text).map_err(|e| e.to_string())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        if t == 0 {
            return Err("--trials must be at least 1".into());
        }
        cfg.trials = t;
    }
    if cli.no_hardcore {
        cfg.system.hardcore = false;
    }
    Ok(cfg)
}

fn render(t: &Table, format: Format) -> String {
    match format {
        Format::Text => t.to_text(),
        Format::Csv => t.to_csv(),
    }
}

fn execute(cli: &Cli) -> Result<bool, String> {
    let cfg = load(cli)?;
    let err = |e: multiairfed::Error| e.to_string();
    match cli.command {
        Command::Simulate => {
            let out = run_experiment(&cfg).map_err(err)?;
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            out.write_to(&dir).map_err(err)?;
            print!("{}", out.file("summary.csv").unwrap_or_default());
            eprintln!("wrote {} files to {}", out.files.len(), dir.display());
        }
        Command::Analytic => print!("{}", render(&analytic_table(&cfg).map_err(err)?, cli.format)),
        Command::Bound => print!("{}", render(&bound_table(&cfg).map_err(err)?, cli.format)),
        Command::Latency => print!("{}", render(&latency_table(&cfg), cli.format)),
        Command::Validate => {
            let report = validate(&cfg).map_err(err)?;
            match cli.format {
                Format::Text => print!("{}", report.to_text()),
                Format::Csv => print!("{}", report.to_csv()),
            }
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
                std::fs::write(dir.join("validate.csv"), report.to_csv()).map_err(|e| e.to_string())?;
            }
            if !report.all_passed() {
                eprintln!("failed checks: {}", report.failed().join(", "));
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let matches = Cli::command().after_long_help(config_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
