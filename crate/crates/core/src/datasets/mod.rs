//! Procedural shapes, scene layouts and tap-sequence corpora. Everything is a
//! pure function of its seeds.

mod corpus;
mod scenes;
mod shapes;

pub use corpus::{
    build_corpus, read_ndjson, tap_record, write_corpus, write_ndjson, Corpus, CorpusConfig, SplitManifest,
};
pub use scenes::{gen_scene, GeneratedScene, SceneParams, MAX_PLACEMENT_ATTEMPTS};
pub use shapes::{gen_shape, sample_spec, Footprint, Layer, ShapeFamily, ShapeSpec};

use crate::interact::InteractError;
use crate::world::WorldError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("unknown shape family {0:?}")]
    UnknownFamily(String),
    #[error("no valid {family} shape after repeated draws for seed {seed}")]
    ShapeRedraws { family: ShapeFamily, seed: u64 },
    #[error("cannot place {k} objects from {available} shapes")]
    TooFewShapes { k: usize, available: usize },
    #[error("bin too crowded: {0} placement attempts rejected")]
    Crowded(usize),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Interact(#[from] InteractError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
