use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use hostrep::config::PipelineConfig;
use hostrep::fixture::{generate_fixture, FixtureParams};
use hostrep::pipeline::run_pipeline;
use hostrep::report::write_report;
use hostrep::{Error, Result, Stage};

#[derive(Parser)]
#[command(name = "hostrep", version, about = "Security reputation metrics for hosting providers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write the report.
    Run {
        config: PathBuf,
        /// Evaluate every stage on the calling thread.
        #[arg(long)]
        single_threaded: bool,
        #[arg(long, env = "HOSTREP_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with a known worst provider.
    Fixture {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        providers: usize,
        #[arg(long, default_value_t = 3)]
        feeds: usize,
        #[arg(long, default_value_t = 0.5)]
        abuse_rate: f64,
        #[arg(long, default_value_t = 1)]
        uptime_feeds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline and print the sensitivity table.
    Sensitivity {
        config: PathBuf,
        #[arg(long)]
        single_threaded: bool,
    },
    /// Check a config and that every input it names exists.
    Validate { config: PathBuf },
}

fn load(path: &Path, single_threaded: bool) -> Result<(PipelineConfig, String)> {
    let (mut cfg, text) = PipelineConfig::load(path)?;
    if single_threaded {
        cfg.parallel = false;
    }
    Ok((cfg, text))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config, single_threaded, output_dir } => {
            let (cfg, text) = load(&config, single_threaded)?;
            let report = run_pipeline(&cfg, &text)?;
            let out = match output_dir {
                Some(p) => p,
                None => cfg.resolve(&cfg.output_dir),
            };
            let written = write_report(&report, &out)?;
            println!("wrote {} files to {}", written.len(), out.display());
            for (asn, score) in hostrep::pipeline::score_rows(&report.occurrence.scores).iter().take(10) {
                println!("AS{asn}\t{score:.6}");
            }
        }
        Command::Fixture { seed, providers, feeds, abuse_rate, uptime_feeds, out } => {
            let params = FixtureParams {
                seed,
                n_providers: providers,
                n_feeds: feeds,
                abuse_rate,
                uptime_feeds,
            };
            let m = generate_fixture(&params, &out)?;
            println!("fixture in {} (worst AS{})", out.display(), m.worst_asn);
        }
        Command::Sensitivity { config, single_threaded } => {
            let (cfg, text) = load(&config, single_threaded)?;
            let report = run_pipeline(&cfg, &text)?;
            println!("variant\tpearson_top_n\tn\ttop_k_common\tk");
            for row in &report.sensitivity {
                match &row.outcome {
                    Ok(c) => println!("{}\t{:.6}\t{}\t{}\t{}", c.variant, c.pearson_top_n, c.n, c.top_k_common, c.k),
                    Err(e) => println!("{}\tNA\t{}\tNA\t{}\t# {e}", row.variant, row.n, row.k),
                }
            }
        }
        Command::Validate { config } => {
            let (cfg, _) = load(&config, false)?;
            for (role, p) in cfg.input_files() {
                let full = cfg.resolve(&p);
                if !full.is_file() {
                    return Err(Error::config(
                        Stage::Config,
                        format!("{role} input {} does not exist", full.display()),
                    ));
                }
            }
            println!("{}: ok ({} feeds)", config.display(), cfg.feeds.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
