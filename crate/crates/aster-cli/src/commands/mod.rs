pub mod eval;
pub mod export;
pub mod seedcheck;
pub mod sweep;
pub mod train;

use anyhow::{Context, Result};
use std::path::{Path, PathBuf};

use aster::config::RunConfig;
use aster::eval::EvalPolicy;
use aster::policy::checkpoint;

/// Loads the run config, or defaults when no path is given.
pub fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

/// Resolves `--checkpoint`: a `stub:*` name or a checkpoint file path.
pub fn load_policy(spec: &str, run: &RunConfig) -> Result<EvalPolicy> {
    if let Some(stub) = EvalPolicy::from_stub_name(spec) {
        return Ok(stub);
    }
    let fp = checkpoint::fingerprint(&run.env, &run.ppo);
    let ac = checkpoint::load(Path::new(spec), &fp)
        .with_context(|| format!("loading checkpoint {spec}"))?;
    Ok(EvalPolicy::Checkpoint(Box::new(ac)))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
