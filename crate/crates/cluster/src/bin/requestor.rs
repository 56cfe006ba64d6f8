use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use apls_cluster::{parse_chunk_id, seed_from_env, store_stripes, Manifest, ReadMode, Requestor};
use apls_core::strategy::Strategy;
use clap::{Parser, Subcommand};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value = "cluster.toml", global = true)]
    manifest: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Reads one chunk and reports latency.
    Read {
        /// `stripe:index`
        #[arg(long)]
        chunk: String,
        /// Reconstruction strategy, or `normal` for a direct read.
        #[arg(long, default_value = "normal")]
        strategy: String,
        #[arg(long, default_value_t = 1)]
        repeat: u32,
        #[arg(long, default_value_t = 0)]
        max_agents: u32,
        /// Write the chunk bytes here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        verbose: bool,
    },
    /// Generates and places stripes under the manifest's stripe directory.
    Store {
        #[arg(long)]
        stripes: Option<u32>,
    },
}

fn run(args: Args) -> apls_cluster::Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    match args.cmd {
        Cmd::Store { stripes } => {
            let n = stripes.unwrap_or(manifest.stripes);
            store_stripes(&manifest, n, seed_from_env(manifest.seed))?;
            println!("stored {n} stripes under {}", manifest.stripe_dir.display());
        }
        Cmd::Read { chunk, strategy, repeat, max_agents, out, verbose } => {
            let (s, c) = parse_chunk_id(&chunk)
                .ok_or_else(|| apls_cluster::ClusterError::Manifest(format!("bad chunk id {chunk:?}")))?;
            let mode = match strategy.as_str() {
                "normal" | "auto" => ReadMode::Auto,
                name => ReadMode::Degraded(name.parse::<Strategy>()?),
            };
            let r = Requestor::start(Arc::new(manifest))?;
            for _ in 0..repeat {
                let o = r.read_with(s, c, mode, max_agents)?;
                let how = o.strategy.map_or("direct".to_string(), |x| x.to_string());
                print!("read {chunk} {how} agents={} latency_s={:.6}", o.agents, o.latency.as_secs_f64());
                if verbose {
                    print!(" coordinator_rtt_s={:.6} starter={:?}", o.coordinator_rtt.as_secs_f64(), o.starter);
                }
                println!();
                if let Some(p) = &out {
                    fs::write(p, &o.data)?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Args::parse()) {
        eprintln!("requestor: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
