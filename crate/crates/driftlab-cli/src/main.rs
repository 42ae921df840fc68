mod args;
mod exec;
mod report;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::Parser;

/// Invalid input exits with 1; a run that starts but fails (all replicas
/// exhausted, singular linear system) exits with 2.
fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(lib) = cause.downcast_ref::<driftlab::Error>() {
            return match lib {
                driftlab::Error::ExperimentFailed(_) | driftlab::Error::SingularSystem(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(n) => Some(n),
        None => match std::env::var("DRIFTLAB_THREADS") {
            Ok(raw) => Some(
                raw.trim()
                    .parse::<usize>()
                    .with_context(|| format!("DRIFTLAB_THREADS is not a thread count: {raw:?}"))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            bail!("the worker pool needs at least one thread");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("worker pool already initialized")?;
    }
    Ok(())
}

fn main() {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = init_threads(cli.threads).and_then(|_| exec::dispatch(cli.command)) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}
