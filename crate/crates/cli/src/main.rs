use std::panic;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use pointbank::bench::TrackingAllocator;
use pointbank::Error;

mod args;
mod commands;

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_)
        | Error::BadK(_)
        | Error::BadCount { .. }
        | Error::DimOverflow { .. }
        | Error::SplitMismatch { .. } => EXIT_USAGE,
        e if e.is_data_error() => EXIT_DATA,
        _ => EXIT_INTERNAL,
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("NPNET_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("NPNET_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    match panic::catch_unwind(|| commands::run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
