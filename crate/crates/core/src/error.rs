use std::path::PathBuf;

use crate::occupancy::VoxelKey;

/// Errors produced by the exploration core.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("voxel {key:?} is outside the map bounds")]
    OutOfBounds { key: VoxelKey },

    #[error("submap {0} is frozen")]
    Frozen(u32),

    #[error("local frontiers of submap {0} are already finalized")]
    FrontiersFinalized(u32),

    #[error("unknown submap id {0}")]
    UnknownSubmap(u32),

    #[error("start position {0:?} is in collision (clearance {1:.3} m)")]
    StartInCollision([f64; 3], f64),

    #[error("reconstruction is empty")]
    EmptyReconstruction,

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
