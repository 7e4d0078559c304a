//! On-disk formats: clip features, word embeddings, dataset manifests and
//! checkpoints.

mod checkpoint;
mod embeddings;
mod features;
mod manifest;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use embeddings::{load_embeddings, parse_embeddings, write_embeddings, EmbeddingTable};
pub use features::{decode_features, encode_features, load_features, write_features, FEATURE_MAGIC, FEATURE_VERSION};
pub use manifest::{load_dataset, load_manifest, save_manifest, DatasetManifest, ManifestPair, MANIFEST_VERSION};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
