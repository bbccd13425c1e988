use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use sodesync_cli::{
    parse_config, resolve_output_dir, run_experiment, CliError, ExperimentConfig, RunSummary, EXIT_USAGE,
    OUTPUT_DIR_ENV, SCHEMA,
};

#[derive(Parser)]
#[command(name = "sodesync", version, about = "Synchronization experiments for coupled SODEs with multiplicative noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Replace the config's seed list.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        seeds_override: Option<Vec<u64>>,
        /// Output directory; overrides the config and the environment.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Size of the worker pool; defaults to the number of cores.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check the closed-form tridiagonal spectra up to size P.
    SpectralCheck {
        #[arg(long, default_value_t = 50)]
        p_max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print an annotated config documenting every key.
    PrintConfigSchema,
}

fn load(path: &PathBuf, seeds: Option<Vec<u64>>) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)?;
    let mut config = parse_config(&text).map_err(CliError::Config)?;
    if let Some(seeds) = seeds {
        config.seeds = seeds;
    }
    Ok(config)
}

fn execute(config: &ExperimentConfig, out: Option<PathBuf>, workers: Option<usize>) -> Result<RunSummary, CliError> {
    let env = std::env::var(OUTPUT_DIR_ENV).ok();
    let dir = resolve_output_dir(out.as_deref(), config, env.as_deref());
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = workers {
        pool = pool.num_threads(k.max(1));
    }
    let pool = pool.build().map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    let start = Instant::now();
    let summary = pool.install(|| run_experiment(config, &dir))?;
    for a in &summary.assertions {
        println!(
            "{:<28} {} {:e}: observed {} [{}]",
            a.name,
            a.comparison,
            a.threshold,
            a.observed.map_or("none".to_string(), |v| format!("{v:e}")),
            if a.passed { "pass" } else { "FAIL" }
        );
    }
    if !summary.flagged_seeds.is_empty() {
        println!("flagged seeds: {:?}", summary.flagged_seeds);
    }
    println!(
        "{}: {:?} in {:.2}s, artifacts in {}",
        summary.experiment,
        summary.status,
        start.elapsed().as_secs_f64(),
        dir.display()
    );
    Ok(summary)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::PrintConfigSchema => {
            print!("{SCHEMA}");
            return ExitCode::SUCCESS;
        }
        Command::SpectralCheck { p_max, out } => {
            if p_max < 2 {
                eprintln!("error: --p-max must be at least 2");
                return ExitCode::from(EXIT_USAGE);
            }
            execute(&ExperimentConfig::spectral(p_max), out, None)
        }
        Command::Run {
            config,
            seeds_override,
            out,
            workers,
        } => load(&config, seeds_override).and_then(|c| {
            if c.seeds.is_empty() && c.experiment != sodesync_cli::Experiment::SpectralCheck {
                return Err(CliError::Config(vec![sodesync_cli::ConfigIssue {
                    path: "seeds".into(),
                    message: "seed list must be non-empty".into(),
                }]));
            }
            execute(&c, out, workers)
        }),
    };
    match outcome {
        Ok(summary) => ExitCode::from(summary.status.exit_code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
