//! JSON dataset manifests.
//!
//! ```json
//! {
//!   "version": 1,
//!   "d_c": 16,
//!   "d_w": 8,
//!   "pairs": [
//!     {
//!       "video_id": "v000",
//!       "feature_file": "features/v000.dvtf",
//!       "sentence": ["red", "ball"],
//!       "annotations": [[3, 4], [3, 4, 5], [4], [3, 4]]
//!     }
//!   ]
//! }
//! ```
//!
//! Feature paths are relative to the manifest's directory.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::embeddings::EmbeddingTable;
use super::features::{decode_header, load_features};
use super::{read_file, write_file};
use crate::dataset::LabeledPair;
use crate::error::{Error, Result};
use crate::metrics::{ThumbnailAnnotation, ANNOTATIONS_PER_PAIR};
use crate::model::VideoClipFeatures;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPair {
    pub video_id: String,
    pub feature_file: String,
    pub sentence: Vec<String>,
    pub annotations: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub d_c: usize,
    pub d_w: usize,
    pub pairs: Vec<ManifestPair>,
}

impl DatasetManifest {
    pub fn new(d_c: usize, d_w: usize) -> Self {
        Self {
            version: MANIFEST_VERSION,
            d_c,
            d_w,
            pairs: Vec::new(),
        }
    }
}

fn pair_err(i: usize, p: &ManifestPair, msg: impl std::fmt::Display) -> Error {
    Error::Validation(format!("pair {i} (video `{}`): {msg}", p.video_id))
}

fn check_annotations(i: usize, p: &ManifestPair, clips: usize) -> Result<()> {
    if p.annotations.len() != ANNOTATIONS_PER_PAIR {
        return Err(pair_err(
            i,
            p,
            format!(
                "expected {ANNOTATIONS_PER_PAIR} annotations, found {}",
                p.annotations.len()
            ),
        ));
    }
    for (a, ann) in p.annotations.iter().enumerate() {
        if ann.is_empty() {
            return Err(pair_err(i, p, format!("annotation {a} selects no clips")));
        }
        ThumbnailAnnotation::new(ann.clone(), clips).map_err(|e| pair_err(i, p, format!("annotation {a}: {e}")))?;
    }
    Ok(())
}

/// Reads and fully validates a manifest. Feature headers are checked
/// against `d_c` and the annotation ranges.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let bytes = read_file(path)?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Validation(format!(
            "{}: unsupported manifest version {}",
            path.display(),
            manifest.version
        )));
    }
    if manifest.d_c == 0 || manifest.d_w == 0 {
        return Err(Error::Validation("d_c and d_w must be positive".into()));
    }
    let base = path.parent().unwrap_or(Path::new(""));
    let mut clip_counts: HashMap<&str, usize> = HashMap::new();
    let mut video_files: HashMap<&str, &str> = HashMap::new();
    for (i, p) in manifest.pairs.iter().enumerate() {
        if p.video_id.is_empty() {
            return Err(pair_err(i, p, "empty video id"));
        }
        if p.sentence.is_empty() {
            return Err(pair_err(i, p, "empty sentence"));
        }
        if let Some(prev) = video_files.insert(&p.video_id, &p.feature_file) {
            if prev != p.feature_file {
                return Err(pair_err(i, p, "video id mapped to two feature files"));
            }
        }
        let clips = match clip_counts.get(p.feature_file.as_str()) {
            Some(&c) => c,
            None => {
                let fpath = base.join(&p.feature_file);
                if !fpath.is_file() {
                    return Err(pair_err(i, p, format!("missing feature file {}", fpath.display())));
                }
                let mut header = [0u8; 16];
                let mut f = std::fs::File::open(&fpath).map_err(|e| Error::io(&fpath, e))?;
                std::io::Read::read_exact(&mut f, &mut header)
                    .map_err(|e| pair_err(i, p, format!("{}: {e}", fpath.display())))?;
                let (c, d) = decode_header(&header, &fpath).map_err(|e| pair_err(i, p, e))?;
                if d != manifest.d_c {
                    return Err(pair_err(
                        i,
                        p,
                        format!("feature width {d} does not match d_c {}", manifest.d_c),
                    ));
                }
                clip_counts.insert(&p.feature_file, c);
                c
            }
        };
        check_annotations(i, p, clips)?;
    }
    Ok(manifest)
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Loads every pair of a manifest, sharing feature files between pairs.
pub fn load_dataset(manifest_path: &Path, embeddings: &EmbeddingTable) -> Result<Vec<LabeledPair>> {
    let manifest = load_manifest(manifest_path)?;
    if embeddings.dim() != manifest.d_w {
        return Err(Error::Validation(format!(
            "embedding dimension {} does not match manifest d_w {}",
            embeddings.dim(),
            manifest.d_w
        )));
    }
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    let mut videos: BTreeMap<&str, VideoClipFeatures> = BTreeMap::new();
    let mut pairs = Vec::with_capacity(manifest.pairs.len());
    for (i, p) in manifest.pairs.iter().enumerate() {
        let video = match videos.get(p.feature_file.as_str()) {
            Some(v) => v.clone(),
            None => {
                let fpath: PathBuf = base.join(&p.feature_file);
                let v = load_features(&fpath)?;
                videos.insert(&p.feature_file, v.clone());
                v
            }
        };
        let annotations = p
            .annotations
            .iter()
            .map(|a| ThumbnailAnnotation::new(a.clone(), video.num_clips()))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| pair_err(i, p, e))?;
        pairs.push(LabeledPair {
            video_id: p.video_id.clone(),
            sentence: embeddings.sentence(&p.sentence)?,
            words: p.sentence.clone(),
            video,
            annotations,
        });
    }
    Ok(pairs)
}
