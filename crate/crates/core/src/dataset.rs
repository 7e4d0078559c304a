//! Video-sentence pairs.

use crate::metrics::ThumbnailAnnotation;
use crate::model::VideoClipFeatures;
use crate::sentence::SentenceTokens;

/// Anything training and evaluation can consume.
///
/// Annotations are reached only through [`Example::annotations`], so a
/// pair without labels can still drive the unsupervised variant.
pub trait Example: Sync {
    fn video_id(&self) -> &str;
    fn video(&self) -> &VideoClipFeatures;
    fn sentence(&self) -> &SentenceTokens;
    fn annotations(&self) -> Option<&[ThumbnailAnnotation]>;
}

/// A video, a query sentence and four thumbnail annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub video_id: String,
    pub video: VideoClipFeatures,
    pub sentence: SentenceTokens,
    pub words: Vec<String>,
    pub annotations: Vec<ThumbnailAnnotation>,
}

impl Example for LabeledPair {
    fn video_id(&self) -> &str {
        &self.video_id
    }

    fn video(&self) -> &VideoClipFeatures {
        &self.video
    }

    fn sentence(&self) -> &SentenceTokens {
        &self.sentence
    }

    fn annotations(&self) -> Option<&[ThumbnailAnnotation]> {
        Some(&self.annotations)
    }
}
