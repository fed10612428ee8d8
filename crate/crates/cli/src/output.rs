//! Output files: provenance header and atomic replacement.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Provenance stamped as the first comment line of every output file.
#[derive(Clone, Debug)]
pub struct Provenance {
    pub command: &'static str,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    /// Comment text without the leading `# `.
    pub fn comment(&self) -> String {
        format!("miri {} seed={} config={}", self.command, self.seed, self.config_hash)
    }
}

/// Creates `dir` and its parents if needed.
pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes `contents` to a temporary file next to `path`, then renames it over `path`, so an
/// interrupted run never leaves a partial file behind.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".miri-")
        .suffix(".tmp")
        .tempfile_in(&dir)
        .map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(contents.as_bytes())
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// `# comment` line followed by `body`.
pub fn with_header(provenance: &Provenance, body: &str) -> String {
    format!("# {}\n{body}", provenance.comment())
}
