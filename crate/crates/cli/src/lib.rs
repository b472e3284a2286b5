//! Command-line front end: configuration, the subcommands and their output files.

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use crate::config::{parse_config_str, ConfigError};
use crate::output::{sha256_hex, OutputDir, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Couple,
    Study,
    Regime,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Couple => "couple",
            Command::Study => "study",
            Command::Regime => "regime",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub seed_common: Option<u64>,
    pub seed_idio: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(chaosjump::Error),
    Io(std::io::Error),
    Usage(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::Usage(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<chaosjump::Error> for CliError {
    fn from(e: chaosjump::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(chaosjump::Error::Divergence { .. }) => EXIT_DIVERGENCE,
            _ => EXIT_INPUT,
        }
    }
}

/// Outcome of a completed run.
#[derive(Debug)]
pub struct RunReport {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub messages: Vec<String>,
}

/// Parse the configuration, run `command` and write its outputs.
pub fn run(command: Command, opts: &RunOptions) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let bytes = std::fs::read(&opts.config)
        .map_err(|e| CliError::Config(ConfigError::Io(format!("{}: {e}", opts.config.display()))))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| CliError::Config(ConfigError::Invalid(vec!["config: not valid UTF-8".into()])))?;
    let mut cfg = parse_config_str(text)?;
    if let Some(s) = opts.seed_common {
        cfg.seeds.common_seed = s;
    }
    if let Some(s) = opts.seed_idio {
        cfg.seeds.idiosyncratic_seed = s;
    }
    if let Some(dir) = &opts.out_dir {
        cfg.output.dir = dir.clone();
    }
    let pool = match opts.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;

    let out = pool.install(|| match command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Couple => commands::couple(&cfg),
        Command::Study => commands::study(&cfg),
        Command::Regime => commands::regime(&cfg),
        Command::Validate => commands::validate(&cfg),
    })?;

    let mut dir = OutputDir::create(&cfg.output.dir)?;
    for (name, data) in &out.files {
        dir.write(name, data)?;
    }
    dir.write_json("summary.json", &out.summary)?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.name().into(),
        config_path: opts.config.display().to_string(),
        config_sha256: sha256_hex(&bytes),
        seeds: cfg.seeds,
        threads: opts.threads,
        exit_code: out.exit_code,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        files: dir.files().to_vec(),
    };
    dir.write_manifest(&manifest)?;
    Ok(RunReport { exit_code: out.exit_code, out_dir: cfg.output.dir, messages: out.messages })
}
