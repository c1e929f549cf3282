//! On-disk formats: tensor files, run configuration, checkpoint manifests
//! and per-iteration metrics.

mod checkpoint;
mod config;
mod metrics;
mod tensor_file;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use checkpoint::{
    load_autoencoder, load_bundle, load_schedule, load_score, load_surrogate, save_component, CheckpointManifest, Component,
    ComponentEntry, FileEntry, MANIFEST_FILE,
};
pub use config::{AeConfig, InvertSection, LdmConfig, PhysicsConfig, Problem, RunConfig, ScheduleConfig, SurrogateConfig};
pub use metrics::{emit_metrics, parse_metrics, render_metrics, MetricsRow, METRICS_HEADER};
pub use tensor_file::{decode_tensor, encode_tensor, read_tensor, write_tensor, MAGIC, VERSION};

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temporary file, syncs it and renames it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
