use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use neus_pipeline::synth::{write_fixture, SynthSpec};
use neus_pipeline::{export_reports, run_all, run_stage, PipelineConfig, PipelineError, Stage};

#[derive(Parser)]
#[command(name = "neus", version, about = "News-embedding basis selection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one stage (corpus, embed, project, cluster, select, evaluate,
    /// report) or `all`.
    Run {
        stage: String,
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a synthetic fixture with planted ground truth.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the report tables from an existing evaluation into a directory.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "config.toml")]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Run { stage, config } => {
            let cfg = PipelineConfig::load(&config)?;
            let done = if stage == "all" {
                run_all(&cfg)?
            } else {
                vec![run_stage(stage.parse::<Stage>()?, &cfg)?]
            };
            for a in done {
                let state = if a.cached { "cached" } else { "built" };
                println!("{}\t{}\t{}", a.stage, state, a.dir.display());
            }
        }
        Command::Synth { spec, out } => {
            let spec = SynthSpec::load(&spec)?;
            for p in write_fixture(&spec, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Report { out, config } => {
            let cfg = PipelineConfig::load(&config)?;
            for p in export_reports(&cfg, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {}", e.class(), msg);
            ExitCode::FAILURE
        }
    }
}
