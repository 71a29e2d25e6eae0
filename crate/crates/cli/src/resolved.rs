//! Resolved-config records that make every run repeatable.

use std::fs;
use std::path::Path;

use crate::error::CliError;
use crate::Command;

pub const FILE_NAME: &str = "resolved_config.json";

/// Writes `command` with every default and file-provided value filled in.
pub fn write(path: &Path, command: Command) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, serde_json::to_string_pretty(&command)? + "\n")?;
    Ok(())
}

pub fn write_in(dir: &Path, command: Command) -> Result<(), CliError> {
    write(&dir.join(FILE_NAME), command)
}

pub fn load(path: &Path) -> Result<Command, CliError> {
    let text = fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::Core(ldl_core::Error::Parse {
            path: e.path().to_string(),
            msg: e.inner().to_string(),
        })
    })
}
