pub mod analyze;
pub mod pretrain;
pub mod probe;
pub mod synth;

use std::fs;
use std::path::Path;

use crate::error::{CliError, CliResult, IoContext};

/// Make `dir` an empty directory. An existing non-empty directory is an error
/// unless `force` is set, in which case its contents are removed.
pub fn fresh_dir(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).at(dir)?.next().is_some();
        if non_empty && !force {
            return Err(CliError::guard(
                dir,
                "directory is not empty (pass --force to replace it)",
            ));
        }
        fs::remove_dir_all(dir).at(dir)?;
    }
    fs::create_dir_all(dir).at(dir)
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).at(parent)?;
    }
    fs::write(path, contents).at(path)
}

pub fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).at(path)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}
