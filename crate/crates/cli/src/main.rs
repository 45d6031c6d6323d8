use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kvn_cli::config::parse_ladder;
use kvn_cli::exit;
use kvn_cli::pipeline::{self, PipelineError};

#[derive(Parser)]
#[command(name = "kvn", about = "Koopman–von Neumann simulator with built-in verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate a scenario and write series, CSVs and the verification report.
    Run {
        config: PathBuf,
        /// Overrides the `output` key of the scenario.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Refinement study against the characteristics oracle.
    Converge {
        config: PathBuf,
        /// Cells per axis for each rung, e.g. 64,128,256.
        #[arg(long, value_parser = parse_ladder)]
        ladder: Option<Vec<usize>>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Static checks on grid, boundary and operators; no time stepping.
    Check { config: PathBuf },
    /// Print the version.
    Version,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn verdict(pass: bool, failed: &[&str]) -> u8 {
    if pass {
        exit::PASS
    } else {
        eprintln!("failed thresholds: {}", failed.join(", "));
        exit::FAIL
    }
}

fn execute(command: Command) -> Result<u8, PipelineError> {
    match command {
        Command::Version => {
            println!("kvn {}", env!("CARGO_PKG_VERSION"));
            Ok(exit::PASS)
        }
        Command::Check { config } => {
            let cfg = pipeline::load(&config)?;
            let threads = pipeline::init_threads()?;
            let report = pipeline::check(&cfg, threads)?;
            print!("{}", report.to_key_value());
            Ok(verdict(report.passes(), &report.failures()))
        }
        Command::Run { config, output } => {
            let cfg = pipeline::load(&config)?;
            let threads = pipeline::init_threads()?;
            let dir = output.unwrap_or_else(|| cfg.output.clone());
            let summary = pipeline::run(&cfg, &dir, threads)?;
            print!("{}", summary.report.to_key_value());
            for f in &summary.files {
                log::info!("wrote {}", f.display());
            }
            Ok(verdict(summary.report.passes(), &summary.report.failures()))
        }
        Command::Converge { config, ladder, output } => {
            let cfg = pipeline::load(&config)?;
            pipeline::init_threads()?;
            let ladder = match ladder {
                Some(l) => l,
                None if !cfg.converge.ladder.is_empty() => cfg.converge.ladder.clone(),
                None => return Err(PipelineError::Ladder("no --ladder given and no converge.ladder in the scenario".into())),
            };
            let table = pipeline::converge(&cfg, &ladder)?;
            let dir = output.unwrap_or_else(|| cfg.output.clone());
            pipeline::write_convergence(&table, &cfg, &dir)?;
            let mut csv = Vec::new();
            table.write_csv(&mut csv).expect("writing to memory");
            print!("{}{}", String::from_utf8_lossy(&csv), table.summary(&cfg));
            let failed = table.failures(&cfg);
            Ok(verdict(failed.is_empty(), &failed))
        }
    }
}
