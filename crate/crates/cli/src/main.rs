use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use newsrank::config::ExperimentConfig;
use newsrank::pipeline;
use newsrank::Error;

/// Simulate, clean and analyze a controlled-personalization A/B experiment.
#[derive(Debug, Parser)]
#[command(name = "newsrank", version)]
struct Cli {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the simulator and write events, catalogs and ground truth.
    Simulate {
        /// Also write the ranker scores of every served ranking.
        #[arg(long)]
        score_trace: bool,
    },
    /// Remove bots, incomplete records and edge days from a log.
    Clean {
        /// Events file, with articles.json and users.json next to it.
        events: PathBuf,
    },
    /// Compute the experiment report and daily series.
    Analyze {
        /// Events file, usually the cleaned one.
        events: PathBuf,
    },
    /// Print a report as tables.
    Report { report: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::Malformed { .. }
        | Error::Config(_)
        | Error::InvalidInput(_)
        | Error::Degenerate(_) => 1,
        Error::Training(_) | Error::Serialize(_) => 2,
    }
}

fn load_config(cli: &Cli) -> newsrank::Result<ExperimentConfig> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let cfg = match cli.seed {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> newsrank::Result<()> {
    if let Command::Report { report } = &cli.command {
        print!("{}", pipeline::render_report(report)?);
        return Ok(());
    }
    let cfg = load_config(cli)?;
    let out: &Path = cli.out.as_deref().unwrap_or(&cfg.output_dir);
    match &cli.command {
        Command::Simulate { score_trace } => {
            let s = pipeline::simulate(&cfg, out, *score_trace)?;
            eprintln!(
                "wrote {} events for {} users and {} articles to {}",
                s.events,
                s.users,
                s.articles,
                out.display()
            );
            if let Some(n) = s.trace_rows {
                eprintln!("wrote {n} score trace rows");
            }
        }
        Command::Clean { events } => {
            let r = pipeline::clean_log(&cfg, events, out)?;
            eprintln!(
                "kept {} of {} events ({} users flagged, {} rejected at load) in {}",
                r.surviving_events,
                r.input_events,
                r.removed_users,
                r.rejected_at_load,
                pipeline::cleaned_events_path(out).display()
            );
        }
        Command::Analyze { events } => {
            let r = pipeline::analyze_log(&cfg, events, out)?;
            eprintln!(
                "analyzed {} events; report in {}",
                r.input.events,
                out.join(pipeline::REPORT_FILE).display()
            );
        }
        Command::Report { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
