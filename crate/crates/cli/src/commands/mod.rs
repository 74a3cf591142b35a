pub mod compare;
pub mod influence;
pub mod report;
pub mod train;
pub mod validate;

use std::path::Path;

use pinn_influence::model::{Checkpoint, ParamVector};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Loads a checkpoint and checks it against the config's model.
pub fn load_checkpoint(path: &Path, config: &RunConfig) -> CliResult<(ParamVector, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let ck = Checkpoint::load(path)?;
    if ck.model != config.model {
        return Err(CliError::validation(format!(
            "checkpoint model {:?} does not match config model {:?}",
            ck.model, config.model
        )));
    }
    Ok((ck.params()?, bytes))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::validation(format!("{}: {e}", dir.display())))
}
