//! The thumbnail network, its auxiliary head and variant assembly.

mod config;
mod net;

pub use config::{ArchConfig, SentenceInput, Variant, VariantConfig, NUM_BLOCKS, NUM_CLASSES, SKIP_BLOCK};
pub use net::{
    aux_reconstruct, decode_scores, encode_video, names, ClipScores, Decoded, Encoded, ForwardOutput, Model, PadInfo,
    VideoClipFeatures,
};
