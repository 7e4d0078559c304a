//! Sentence-guided dynamic video thumbnail generation.
//!
//! A temporal fully-convolutional network scores every clip of a video as
//! thumbnail or not. A self-attention encoder turns the query sentence
//! into a vector, which predicts per-channel scale and shift applied to
//! the normalized encoder activations. An auxiliary head reconstructs the
//! sentence vector from the decoder to keep the thumbnail aligned with the
//! query.
//!
//! Everything runs on a small `f64` reverse-mode autodiff engine
//! ([`autograd`]).

pub mod autograd;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod sentence;
pub mod sgtm;
pub mod synth;
pub mod tensor;
pub mod train;

pub use autograd::{Gradients, Tape, Var};
pub use dataset::{Example, LabeledPair};
pub use error::{Error, Result};
pub use metrics::{Aggregation, InferenceRule, ThumbnailAnnotation};
pub use model::{ArchConfig, ClipScores, Model, Variant, VariantConfig, VideoClipFeatures};
pub use optim::{AdamConfig, AdamState};
pub use params::ModelParams;
pub use sentence::SentenceTokens;
pub use sgtm::ModulationMode;
pub use tensor::Tensor;
pub use train::{evaluate, train, EvalResult, TrainConfig, TrainOutcome};
