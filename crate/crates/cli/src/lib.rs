//! Command-line driver for the mapdelta pipeline.
//!
//! Exit status: 0 on success, 1 when the pipeline rejects its input (for
//! example a section that cannot be registered), 2 on usage, config or input
//! errors.

mod args;
mod commands;
mod log;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;
use mapdelta::config::ConfigError;
use mapdelta::model::BundleError;
use mapdelta::pipeline::PipelineError;
use mapdelta::PipelineConfig;

pub use args::Cli;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {detail}")]
    Input { path: PathBuf, detail: String },
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Rejected(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Rejected(_) => 1,
            _ => 2,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Pool(_) => CliError::Rejected(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

/// Runs with the process environment.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    run_with_env(argv, std::env::vars())
}

/// Runs with an explicit environment, so `MAPDELTA_*` overrides can be
/// supplied without touching the process state.
pub fn run_with_env<I, S, E>(argv: I, env: E) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
    E: IntoIterator<Item = (String, String)>,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let log = log::Log::new(cli.global.quiet);
    let result = resolve_config(&cli.global, env).and_then(|cfg| commands::dispatch(&cli.command, &cfg, cli.global.seed, &log));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            log.event("error", serde_json::json!({ "exit": code, "error": e.to_string() }));
            eprintln!("error: {e}");
            code
        }
    }
}

/// Defaults, then the config file, then environment, then flags.
fn resolve_config(g: &args::Global, env: impl IntoIterator<Item = (String, String)>) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
            PipelineConfig::from_json(&text)?
        }
        None => PipelineConfig::default(),
    };
    cfg.apply_env(env)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}
