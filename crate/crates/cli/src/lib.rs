//! Configuration-driven runs of the characteristic solver.

pub mod builtin;
pub mod config;
pub mod output;
pub mod pipeline;

use std::fs;
use std::path::Path;

use config::{RawConfig, RunConfig};
use pipeline::{PipelineError, RunArtifacts};

/// Reads a config file, or `builtin:NAME`, and applies `key=value`
/// overrides.
pub fn load_config(source: &str, overrides: &[String]) -> Result<RunConfig, PipelineError> {
    let text = match source.strip_prefix("builtin:") {
        Some(name) => builtin::get(name)
            .ok_or_else(|| PipelineError::Output(format!("no builtin config `{name}`")))?
            .to_string(),
        None => fs::read_to_string(source)
            .map_err(|e| PipelineError::Output(format!("{source}: {e}")))?,
    };
    let mut raw = RawConfig::parse(&text)?;
    for kv in overrides {
        raw.set_override(kv)?;
    }
    Ok(RunConfig::from_raw(raw)?)
}

/// Runs a config and writes its report files into `dir`.
pub fn run_to_dir(cfg: &RunConfig, dir: &Path) -> Result<RunArtifacts, PipelineError> {
    let art = pipeline::run(cfg)?;
    output::write_all(&art, dir, cfg.diag.grid_stride)?;
    Ok(art)
}
