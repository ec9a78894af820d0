pub mod analyze;
pub mod probe;
pub mod report;
pub mod snr;
pub mod synth;

use std::path::PathBuf;

use anyhow::{Context, Result};

use crate::config::ConfigFile;
use crate::output::{Format, Outputs};
use crate::CommonArgs;

pub const OUT_ENV: &str = "FILTERLENS_OUT";

pub struct RunContext {
    pub cfg: ConfigFile,
    pub outputs: Outputs,
}

/// Loads the config file, resolves the output directory and sizes the
/// worker pool.
pub fn setup(common: &CommonArgs, default_formats: &[Format]) -> Result<RunContext> {
    let cfg = ConfigFile::load(common.config.as_deref())?;
    let out = match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg
            .pick(common.out.clone(), "out")?
            .unwrap_or_else(|| PathBuf::from("filterlens-out")),
    };
    let jobs: Option<usize> = cfg.pick(common.jobs, "jobs")?;
    if let Some(j) = jobs.filter(|&j| j > 0) {
        // A pool may already exist when commands run in-process (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let mut formats: Vec<Format> = if common.format.is_empty() {
        cfg.get_list::<String>("format")?
            .iter()
            .map(|s| <Format as clap::ValueEnum>::from_str(s, true).map_err(anyhow::Error::msg))
            .collect::<Result<_>>()
            .context("config key format")?
    } else {
        common.format.clone()
    };
    if formats.is_empty() {
        formats = default_formats.to_vec();
    }
    Ok(RunContext {
        cfg,
        outputs: Outputs::new(out, formats)?,
    })
}
