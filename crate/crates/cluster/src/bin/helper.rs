use std::path::PathBuf;
use std::process::ExitCode;

use apls_cluster::{helper_serve, Manifest};
use clap::Parser;

/// Stores chunks and executes reconstruction steps.
#[derive(Parser)]
struct Args {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    id: u32,
    /// Upstream limit in bits/s; defaults to the manifest entry.
    #[arg(long)]
    up_bw: Option<f64>,
    /// Downstream limit in bits/s; defaults to the manifest entry.
    #[arg(long)]
    down_bw: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let result = Manifest::load(&args.manifest).and_then(|m| helper_serve(m, args.id, args.up_bw, args.down_bw));
    if let Err(e) = result {
        eprintln!("helper {}: {e}", args.id);
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
