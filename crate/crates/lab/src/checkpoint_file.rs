//! Checkpoint files on disk.

use std::path::Path;

use acl_core::checkpoint::{self, Tensor};

use crate::error::{from_core, LabError, LabResult};

pub fn save(path: &Path, tensors: &[Tensor]) -> LabResult<()> {
    std::fs::write(path, checkpoint::encode(tensors)).map_err(|e| LabError::output(path, e))
}

pub fn load(path: &Path) -> LabResult<Vec<Tensor>> {
    let bytes = std::fs::read(path).map_err(|e| LabError::read(path, e))?;
    checkpoint::decode(&bytes).map_err(|e| from_core(&path.display().to_string(), e))
}
