use std::path::PathBuf;
use std::process::ExitCode;

use apls_cluster::{coordinator_serve, seed_from_env, Manifest};
use clap::Parser;

/// Plans reads and degraded-read reconstructions for a cluster.
#[derive(Parser)]
struct Args {
    #[arg(long)]
    manifest: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let result = Manifest::load(&args.manifest).and_then(|m| {
        let seed = seed_from_env(m.seed);
        coordinator_serve(m, seed)
    });
    if let Err(e) = result {
        eprintln!("coordinator: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
