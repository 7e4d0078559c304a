//! Shared inputs for the benchmarks.

use std::collections::BTreeMap;

use dvtg_core::loss::{aux_loss, final_loss, thumb_loss};
use dvtg_core::{
    ArchConfig, Model, Result, SentenceTokens, Tape, Tensor, ThumbnailAnnotation, Variant, VariantConfig,
    VideoClipFeatures,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const D_C: usize = 16;
pub const D_W: usize = 300;
pub const WORDS: usize = 8;

/// A model with one random video, sentence and ground truth.
pub struct Fixture {
    pub model: Model,
    pub video: VideoClipFeatures,
    pub sentence: SentenceTokens,
    pub gt: ThumbnailAnnotation,
}

impl Fixture {
    pub fn new(arch: ArchConfig, variant: Variant, clips: usize) -> Result<Self> {
        let model = Model::init(arch, VariantConfig::new(variant), D_C, D_W, 0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let video = VideoClipFeatures::new(Tensor::uniform(&[1, clips, D_C], 1.0, &mut rng))?;
        let sentence = SentenceTokens::new(Tensor::uniform(&[D_W, WORDS], 1.0, &mut rng))?;
        let gt = ThumbnailAnnotation::new(vec![0, clips / 2, clips - 1], clips)?;
        Ok(Self {
            model,
            video,
            sentence,
            gt,
        })
    }

    /// Training-mode loss and its gradient for every parameter.
    pub fn loss_and_grads(&self) -> Result<(f64, BTreeMap<String, Tensor>)> {
        let mut tape = Tape::new();
        let bound = self.model.params.bind(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = self
            .model
            .forward(&mut tape, &bound, &self.video, Some(&self.sentence), true, &mut rng)?;
        let variant = &self.model.variant;
        let thumb = variant
            .uses_thumb_loss()
            .then(|| thumb_loss(&mut tape, out.scores, &self.gt))
            .transpose()?;
        let aux = match (out.z, out.z_hat) {
            (Some(z), Some(z_hat)) if variant.uses_aux_loss() => Some(aux_loss(&mut tape, z, z_hat)?),
            _ => None,
        };
        let loss = final_loss(&mut tape, thumb, aux, variant, 1.0)?;
        let value = tape.value(loss).data()[0];
        let mut grads = tape.backward(loss);
        Ok((value, bound.grads(&mut grads)))
    }
}
