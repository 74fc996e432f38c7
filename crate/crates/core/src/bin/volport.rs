use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use volport::report::{load_reports, render_table, run, Criterion, Format, RunOverrides};

#[derive(Parser)]
#[command(name = "volport", version, about = "Covariance forecasting and portfolio backtests")]
struct Cli {
    /// Master seed for the seeded estimators (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the backtest.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output format(s): csv, markdown, json. Repeatable.
    #[arg(long, global = true)]
    format: Vec<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the backtests and reports described by a TOML config.
    Run { config: PathBuf },
    /// Print the tables of a finished run.
    Render {
        manifest: PathBuf,
        #[arg(long, default_value = "sharpe")]
        criterion: Criterion,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => {
            let overrides = RunOverrides {
                seed: cli.seed,
                jobs: cli.jobs,
                formats: (!cli.format.is_empty()).then(|| cli.format.clone()),
                output_dir: None,
            };
            run(&config, &overrides).map(|m| {
                for d in &m.datasets {
                    println!(
                        "{}: {} periods, {} fallbacks, metrics in {}",
                        d.name,
                        d.periods,
                        d.fallback_log.len(),
                        d.metrics.display()
                    );
                }
            })
        }
        Command::Render { manifest, criterion } => load_reports(&manifest).map(|(m, reports)| {
            let format = cli.format.first().copied().unwrap_or(Format::Markdown);
            for s in m.config.backtest.active_strategies() {
                print!("{}", render_table(&reports, criterion, s, format));
                println!();
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
