use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use apls_bench::{compare, format_table, read_rows, run_experiment, ExperimentSpec, RowWriter};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(about = "Degraded-read latency sweeps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment and write one CSV row per configuration.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print ratios against ECPipe and normal reads.
    Compare {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bench: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> apls_bench::Result<()> {
    match cli.cmd {
        Cmd::Run { spec, out } => {
            let spec = ExperimentSpec::load(&spec)?;
            let mut w = RowWriter::new(BufWriter::new(File::create(&out)?));
            let rows = run_experiment(&spec, &mut w)?;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
        }
        Cmd::Compare { input } => {
            let rows = read_rows(File::open(input)?)?;
            print!("{}", format_table(&compare(&rows)?));
        }
    }
    Ok(())
}
