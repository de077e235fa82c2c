//! Checkpoint files.

use std::fs;
use std::path::Path;

use popbo::session::{Checkpoint, Session};

use crate::CliError;

/// Writes `session`'s checkpoint through a temporary file so a crash never
/// leaves a truncated document behind.
pub fn save(session: &Session, path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, session.checkpoint().to_json()?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads and replays a checkpoint.
pub fn load(path: &Path) -> Result<Session, CliError> {
    let text = fs::read_to_string(path)?;
    Ok(Session::restore(&Checkpoint::from_json(&text)?)?)
}
