//! Configuration files, checkpoints, pool files and reports.

pub mod checkpoint;
pub mod config;
pub mod container;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, load_pool, pool_bytes, pool_from_bytes,
    save_checkpoint, save_pool, Checkpoint, FORMAT_VERSION,
};
pub use config::{RunConfig, SuiteKind};

use crate::error::{Error, Result};
use crate::eval::SuiteResult;

/// Environment variable naming the default artifact directory.
pub const DATA_DIR_ENV: &str = "ADAPTPLANNER_DATA_DIR";

/// `$ADAPTPLANNER_DATA_DIR`, or `./adaptplanner-data` when unset.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("adaptplanner-data"))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::SchemaMismatch(e.to_string()))?;
    text.push('\n');
    container::write_file(path, text.as_bytes())
}

/// Writes `<stem>.csv` (per episode) and `<stem>.json` (aggregates) into `dir`.
pub fn write_suite(dir: &Path, stem: &str, result: &SuiteResult) -> Result<(PathBuf, PathBuf)> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let mut buf = Vec::new();
    result.write_csv(&mut buf)?;
    container::write_file(&csv_path, &buf)?;
    write_json(&json_path, result)?;
    Ok((csv_path, json_path))
}
