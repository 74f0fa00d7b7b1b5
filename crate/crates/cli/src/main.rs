use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cflow_cli::error::exit;
use cflow_cli::{dispatch, parse_config, Command};

/// Conformal-harmonic map flows on a periodic 4-D lattice.
#[derive(Debug, Parser)]
#[command(name = "cflow", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads; 0 lets rayon decide.
    #[arg(long, env = "CFLOW_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::CONFIG as u8 } else { 0 });
        }
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot configure {n} threads: {e}");
            return ExitCode::from(exit::RUNTIME as u8);
        }
    }
    let code = parse_config(&args.config)
        .and_then(|cfg| dispatch(args.command, &cfg, args.output_dir.as_deref(), &mut std::io::stdout().lock()))
        .unwrap_or_else(|e| {
            eprintln!("cflow: {e}");
            e.exit_code()
        });
    ExitCode::from(code as u8)
}
