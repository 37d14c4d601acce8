use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use jambayes_gateway::cli::{Cli, Command};
use jambayes_gateway::files::DataDir;
use jambayes_gateway::live::Live;
use jambayes_gateway::{pipeline, server};

fn run(cli: Cli) -> anyhow::Result<Option<serde_json::Value>> {
    let dir = DataDir::new(&cli.data);
    let seed = cli.seed;
    let summary = match &cli.command {
        Command::Simulate(a) => pipeline::simulate_cmd(&dir, a, seed)?,
        Command::Identify(a) => pipeline::identify_cmd(&dir, a)?,
        Command::BuildCases(a) => pipeline::build_cases_cmd(&dir, a)?,
        Command::Train(a) => pipeline::train_cmd(&dir, a, seed)?,
        Command::Evaluate(a) => pipeline::evaluate_cmd(&dir, a)?,
        Command::SurpriseEval(a) => pipeline::surprise_eval_cmd(&dir, a)?,
        Command::FutureSurpriseEval(a) => pipeline::future_surprise_eval_cmd(&dir, a, seed)?,
        Command::Replay(a) => pipeline::replay_cmd(&dir, a)?,
        Command::Serve(a) => {
            let start = pipeline::resolve_start(&dir, a.start.as_deref())?;
            let live = Live::load(dir, start)?;
            let rt = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
            rt.block_on(server::serve(live, &a.host, a.port, a.rate))?;
            return Ok(None);
        }
    };
    Ok(Some(summary))
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(Some(summary)) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
