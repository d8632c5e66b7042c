use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use saga_cli::demo::{init_demo, DemoOptions};
use saga_cli::{run_stage, serve, CliError, Pipeline, RunOptions, Stage};

#[derive(Parser, Debug)]
#[command(name = "saga", version, about = "Build, serve and inspect a knowledge graph")]
struct Cli {
    /// Pipeline config.
    #[arg(long, global = true, default_value = "saga.json")]
    config: PathBuf,
    /// Treat this LSN as the last one every stage consumed.
    #[arg(long, global = true)]
    since_lsn: Option<u64>,
    /// Seed for linking and embedding training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Where to write the run report.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Import, transform and align every source; stage deltas.
    Ingest,
    /// Fuse staged deltas into the graph and append to the operation log.
    Construct,
    /// Replay store agents and refresh the view catalog.
    Views,
    /// Retrain graph embeddings.
    Embed,
    /// Build the live indexes from the stable graph and streams.
    LiveBuild,
    /// Every stage in order.
    Run,
    /// Serve KGQ, intent and curation requests as JSON lines over TCP.
    Serve {
        /// Overrides the configured address.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Print every fact of an entity with its provenance.
    Inspect { entity: String },
    /// Write the two-source demo into a directory.
    InitDemo {
        dir: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
}

fn opts(cli: &Cli) -> RunOptions {
    RunOptions { since_lsn: cli.since_lsn, seed: cli.seed, report: cli.report.clone() }
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("report serializes"));
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let stage = match &cli.command {
        Command::Ingest => Some(Stage::Ingest),
        Command::Construct => Some(Stage::Construct),
        Command::Views => Some(Stage::Views),
        Command::Embed => Some(Stage::Embed),
        Command::LiveBuild => Some(Stage::LiveBuild),
        Command::Run => None,
        Command::Serve { bind } => {
            return serve(&cli.config, bind.as_deref(), |addr| println!("listening on {addr}"));
        }
        Command::Inspect { entity } => {
            let p = Pipeline::load(&cli.config, opts(cli))?;
            print_json(&p.inspect(entity)?);
            return Ok(());
        }
        Command::InitDemo { dir, scale } => {
            let summary =
                init_demo(dir, &DemoOptions { seed: cli.seed.unwrap_or(DemoOptions::default().seed), scale: *scale })?;
            print_json(&summary);
            return Ok(());
        }
    };
    print_json(&run_stage(&cli.config, stage, opts(cli))?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Config(m) => eprintln!("error: config: {m}"),
                CliError::Stage { stage, message } => eprintln!("error: stage {stage}: {message}"),
                CliError::UnknownEntity(id) => {
                    eprintln!("error: stage inspect: unknown entity {id}")
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
