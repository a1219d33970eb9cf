//! Command-line front end: job files, reports and the built-in check suite.
//!
//! Every command produces a JSON report with a top-level `"schema"` tag and,
//! unless disabled, SVG figures. Files are staged in a hidden directory and
//! moved into place only when the command succeeds.

mod check;
mod commands;
mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use check::{run_suite, CheckBody, CheckItem, CheckReport};
pub use commands::{
    ExhaustBody, FoliateBody, InfoBody, LevelBody, SolveBody, TrajectoryRecord,
};
pub use config::{
    Differential, DifferentialConfig, ExhaustionConfig, FoliateConfig, GeometryKind, JobConfig,
    Pair, SolverConfig,
};

use crate::error::{Error, Result};

pub const SCHEMA: &str = "crownflow/1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "crownflow", version, about = "Quadratic differentials and harmonic maps into the hyperbolic plane")]
pub struct Args {
    /// Job file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output` in the job file).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for randomized steps (overrides `seed` in the job file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write SVG figures (default).
    #[arg(long, global = true, overrides_with = "no_svg")]
    pub svg: bool,
    /// Skip SVG figures.
    #[arg(long = "no-svg", global = true)]
    pub no_svg: bool,
    /// Treat warnings as failures.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Leave the timestamp comment out of SVG files.
    #[arg(long = "no-timestamp", global = true)]
    pub no_timestamp: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Principal part, residues, zeros and ray directions.
    Info,
    /// Horizontal and vertical trajectories through a circle of seeds.
    Foliate,
    /// Polygonal exhaustion around the pole.
    Exhaust,
    /// Bochner solve on a disk or annulus grid.
    Solve,
    /// Model-map pipeline for the principal part of the differential.
    Pipeline,
    /// Built-in invariant suite.
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Info => "info",
            Command::Foliate => "foliate",
            Command::Exhaust => "exhaust",
            Command::Solve => "solve",
            Command::Pipeline => "pipeline",
            Command::Check => "check",
        }
    }
}

/// Versioned envelope of every JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub schema: String,
    pub command: String,
    pub seed: u64,
    pub warnings: Vec<String>,
    pub body: T,
}

/// Options shared by all commands after flag/config merging.
#[derive(Debug, Clone)]
pub struct Options {
    pub seed: u64,
    pub svg: bool,
    pub timestamp: bool,
}

/// Single writer for a command's artifacts. Files go to a staging
/// directory and are moved into the output directory by [`Writer::commit`].
#[derive(Debug)]
pub struct Writer {
    out: PathBuf,
    staging: PathBuf,
    written: Vec<String>,
}

impl Writer {
    pub fn new(out: &Path, command: &str) -> Result<Self> {
        std::fs::create_dir_all(out)?;
        let staging = out.join(format!(".staging-{command}"));
        if staging.exists() {
            std::fs::remove_dir_all(&staging)?;
        }
        std::fs::create_dir_all(&staging)?;
        Ok(Writer { out: out.to_path_buf(), staging, written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.staging.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.path(name), bytes)?;
        self.note(name);
        Ok(())
    }

    /// Records a file written directly into [`Writer::path`].
    pub fn note(&mut self, name: &str) {
        if !self.written.iter().any(|n| n == name) {
            self.written.push(name.to_string());
        }
    }

    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut moved = Vec::new();
        for name in &self.written {
            let target = self.out.join(name);
            std::fs::rename(self.staging.join(name), &target)?;
            moved.push(target);
        }
        std::fs::remove_dir_all(&self.staging)?;
        Ok(moved)
    }

    pub fn abandon(self) {
        let _ = std::fs::remove_dir_all(&self.staging);
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}

/// Runs one command; returns the process exit code. Reports go to stdout
/// as JSON, diagnostics to stderr.
pub fn run(args: &Args) -> i32 {
    let config = match &args.config {
        Some(path) => match JobConfig::load(path) {
            Ok(c) => Some(c),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        },
        None => None,
    };
    let options = Options {
        seed: args.seed.or(config.as_ref().map(|c| c.seed)).unwrap_or(0),
        svg: !args.no_svg,
        timestamp: !args.no_timestamp,
    };
    let out = args
        .out
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.output.clone()));

    if args.command == Command::Check {
        return run_check(out.as_deref(), &options);
    }
    let Some(config) = config else {
        eprintln!("error: config: `{}` needs --config", args.command.name());
        return EXIT_CONFIG;
    };
    let out = out.unwrap_or_else(|| PathBuf::from("crownflow-out"));
    let mut writer = match Writer::new(&out, args.command.name()) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NUMERICAL;
        }
    };
    let result = commands::dispatch(args.command, &config, &options, &mut writer);
    match result {
        Ok((json, warnings)) => {
            if let Err(e) = writer.commit() {
                eprintln!("error: {e}");
                return EXIT_NUMERICAL;
            }
            println!("{json}");
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            if args.strict && !warnings.is_empty() {
                EXIT_INVARIANT
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            writer.abandon();
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run_check(out: Option<&Path>, options: &Options) -> i32 {
    let report = run_suite(options.seed);
    let passed = report.body.failed == 0;
    let json = match serde_json::to_string_pretty(&report) {
        Ok(j) => j,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_NUMERICAL;
        }
    };
    if let Some(out) = out {
        let staged = Writer::new(out, "check").and_then(|mut w| {
            w.write("check.json", format!("{json}\n").as_bytes())?;
            w.commit()
        });
        if let Err(e) = staged {
            eprintln!("error: {e}");
            return EXIT_NUMERICAL;
        }
    }
    println!("{json}");
    if passed {
        EXIT_OK
    } else {
        EXIT_INVARIANT
    }
}
