pub mod evaluate;
pub mod generate;
pub mod ingest;
pub mod train;

use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use crate::error::{io_err, CliError};

fn is_midi(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"))
}

/// MIDI files under `root` (or `root` itself), sorted by path.
pub fn midi_files(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    if root.is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            CliError::Io { path, source: e.into() }
        })?;
        if entry.file_type().is_file() && is_midi(entry.path()) {
            out.push(entry.into_path());
        }
    }
    if out.is_empty() {
        return Err(CliError::NoFilesFound(root.to_path_buf()));
    }
    Ok(out)
}

/// Path relative to `root` with forward slashes, stable across platforms.
pub fn relative_id(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    let id = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
    if id.is_empty() {
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    } else {
        id
    }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(io_err(path))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(io_err(path))
}
