//! `diffcam`: render, calibrate, check gradients, generate fixtures and
//! compare images from the command line.
//!
//! Exit status: 0 on success, 1 when a gradient check fails, 2 for bad
//! input or unmet preconditions, 3 when a numerical procedure degenerates.

#![allow(clippy::needless_range_loop)]

mod calibrate;
mod io;
mod manifest;
mod render;
mod tools;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diffcam::ErrorKind;

#[derive(Parser, Debug)]
#[command(name = "diffcam", version, about = "Differentiable camera simulator")]
struct Cli {
    /// Worker threads (defaults to DIFFCAM_THREADS, then the CPU count).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render scene radiance (and depth) to a RAW16 image.
    Render(render::RenderArgs),
    /// Fit sensor parameters from a manifest of images.
    Calibrate(calibrate::CalibrateArgs),
    /// Compare analytic and finite-difference gradients of each layer.
    Gradcheck(tools::GradcheckArgs),
    /// Generate a synthetic scene from a JSON spec.
    Fixture(tools::FixtureArgs),
    /// PSNR and SSIM over the effective pixels.
    Compare(tools::CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

impl OnOff {
    pub fn enabled(self) -> bool {
        self == OnOff::On
    }
}

#[derive(Args, Debug, Clone)]
pub struct ParamsArg {
    /// Camera and sensor parameter JSON; neutral values when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

/// Failure carrying the exit status it should map to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<diffcam::Error> for Failure {
    fn from(e: diffcam::Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Input | ErrorKind::Io => 2,
            ErrorKind::Numerical => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

fn thread_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("DIFFCAM_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::input(format!("DIFFCAM_THREADS must be a positive integer (got `{v}`)"))),
        _ => Ok(None),
    }
}

fn run(cli: Cli) -> CliResult<u8> {
    let threads = thread_count(cli.threads)?;
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::input("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::input(e.to_string()))?;
    }
    match cli.command {
        Command::Render(args) => render::run(args, threads),
        Command::Calibrate(args) => calibrate::run(args),
        Command::Gradcheck(args) => tools::gradcheck(args),
        Command::Fixture(args) => tools::fixture(args),
        Command::Compare(args) => tools::compare(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
