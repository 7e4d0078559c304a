use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ArchConfig, SentenceInput, VariantConfig, NUM_BLOCKS, NUM_CLASSES, SKIP_BLOCK};
use crate::autograd::{Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::params::{BoundParams, ModelParams};
use crate::sentence::{self, AttentionWeights, SentenceTokens};
use crate::sgtm::{self, ModulationMode, Site};
use crate::tensor::Tensor;

/// Parameter naming.
pub mod names {
    pub fn conv(block: usize, layer: usize) -> (String, String) {
        let base = format!("conv{}_{}", block + 1, layer + 1);
        (format!("{base}.weight"), format!("{base}.bias"))
    }

    pub fn layer(base: &str) -> (String, String) {
        (format!("{base}.weight"), format!("{base}.bias"))
    }

    pub const FC6: &str = "fc6";
    pub const FC7: &str = "fc7";
    pub const SCORE_OUT: &str = "score_out";
    pub const SCORE_SKIP: &str = "score_skip";
    pub const DECONV1: &str = "deconv1";
    pub const DECONV2: &str = "deconv2";
    pub const AUX: &str = "aux";
}

/// Clip features of one video, `1 x C x D_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClipFeatures {
    features: Tensor,
}

impl VideoClipFeatures {
    pub fn new(features: Tensor) -> Result<Self> {
        let (c, d) = features.seq_dims()?;
        if c == 0 || d == 0 {
            return Err(Error::Data(format!(
                "video must have clips and features, got {c} x {d}"
            )));
        }
        if !features.all_finite() {
            return Err(Error::Data("clip features contain non-finite values".into()));
        }
        Ok(Self { features })
    }

    /// Builds from `C` rows of `D_c` values.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(shape_err!("clip feature rows differ in length"));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(Tensor::new(vec![1, rows.len(), d], data)?)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.features
    }

    pub fn num_clips(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn dim(&self) -> usize {
        self.features.shape()[2]
    }
}

/// Per-clip scores `1 x C x 2`; class 1 is "in the thumbnail".
#[derive(Debug, Clone, PartialEq)]
pub struct ClipScores {
    scores: Tensor,
}

impl ClipScores {
    pub fn new(scores: Tensor) -> Result<Self> {
        match scores.shape() {
            [1, _, 2] => {}
            s => return Err(shape_err!("clip scores must be 1 x C x 2, got {:?}", s)),
        }
        Ok(Self { scores })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.scores
    }

    pub fn num_clips(&self) -> usize {
        self.scores.shape()[1]
    }

    /// `score[thumbnail] - score[non-thumbnail]` per clip.
    pub fn margins(&self) -> Vec<f64> {
        self.scores.data().chunks(2).map(|p| p[1] - p[0]).collect()
    }

    /// Softmax probability of the thumbnail class per clip.
    pub fn thumbnail_probs(&self) -> Vec<f64> {
        self.margins().into_iter().map(|m| 1.0 / (1.0 + (-m).exp())).collect()
    }
}

/// Original and padded clip counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadInfo {
    pub original: usize,
    pub padded: usize,
}

impl PadInfo {
    pub fn new(clips: usize, multiple: usize) -> Self {
        Self {
            original: clips,
            padded: clips.div_ceil(multiple).max(1) * multiple,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    /// Last encoder output, `1 x padded/32 x fc7`.
    pub out: Var,
    /// Pooled conv4 activation, `1 x padded/16 x block_channels[3]`.
    pub skip: Var,
    pub pad: PadInfo,
}

#[derive(Debug, Clone, Copy)]
pub struct Decoded {
    /// Cropped scores, `1 x C x 2`.
    pub scores: Var,
    /// Uncropped deconv2 activation.
    pub deconv2: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    pub scores: Var,
    /// Reconstructed sentence vector from the auxiliary head.
    pub z_hat: Option<Var>,
    /// Sentence vector from the encoder.
    pub z: Option<Var>,
}

/// Zero-pads the clip axis on the right to `pad.padded`.
fn pad_clips(features: &Tensor, pad: PadInfo) -> Tensor {
    let d = features.shape()[2];
    let mut data = features.data().to_vec();
    data.resize(pad.padded * d, 0.0);
    Tensor::new(vec![1, pad.padded, d], data).expect("padded size")
}

fn conv_relu(tape: &mut Tape, bound: &BoundParams, x: Var, w: &str, b: &str, padding: usize) -> Result<Var> {
    let y = tape.conv1d(x, bound.var(w)?, bound.var(b)?, 1, padding)?;
    Ok(tape.relu(y))
}

/// Runs conv1..conv5 and fc6, fc7 on an already padded `1 x L x D` input.
pub fn encode_video<R: Rng + ?Sized>(
    tape: &mut Tape,
    bound: &BoundParams,
    input: Var,
    pad: PadInfo,
    cfg: &ArchConfig,
    training: bool,
    rng: &mut R,
) -> Result<Encoded> {
    let (len, _) = tape.value(input).seq_dims()?;
    if len != pad.padded || len % cfg.total_stride() != 0 {
        return Err(Error::Arch(format!(
            "encoder input length {len} is not the padded length {}",
            pad.padded
        )));
    }
    let same = cfg.conv_kernel / 2;
    let mut x = input;
    let mut skip = None;
    for block in 0..NUM_BLOCKS {
        for layer in 0..cfg.convs_per_block {
            let (w, b) = names::conv(block, layer);
            x = conv_relu(tape, bound, x, &w, &b, same)?;
        }
        x = tape.max_pool1d(x, cfg.pool_size, cfg.pool_stride)?;
        if block == SKIP_BLOCK {
            skip = Some(x);
        }
    }
    for fc in [names::FC6, names::FC7] {
        let (w, b) = names::layer(fc);
        x = conv_relu(tape, bound, x, &w, &b, 0)?;
        x = tape.dropout(x, cfg.dropout_p, training, rng)?;
    }
    Ok(Encoded {
        out: x,
        skip: skip.expect("skip block is within range"),
        pad,
    })
}

fn centered_crop(tape: &mut Tape, x: Var, target: usize, what: &str) -> Result<Var> {
    let (len, _) = tape.value(x).seq_dims()?;
    if len < target {
        return Err(Error::Arch(format!(
            "{what} produced length {len}, shorter than the required {target}"
        )));
    }
    tape.crop(x, target, (len - target) / 2)
}

/// Decoder: 1x1 score conv and deconv1 on the encoder output, fused by
/// addition with the 1x1-scored skip activation, then deconv2 and a crop
/// back to the original clip count.
pub fn decode_scores(
    tape: &mut Tape,
    bound: &BoundParams,
    out: Var,
    skip: Var,
    pad: PadInfo,
    cfg: &ArchConfig,
) -> Result<Decoded> {
    let (out_len, _) = tape.value(out).seq_dims()?;
    let (skip_len, _) = tape.value(skip).seq_dims()?;
    if skip_len != out_len * cfg.deconv1_stride {
        return Err(Error::Arch(format!(
            "skip length {skip_len} does not match encoder length {out_len} x {}",
            cfg.deconv1_stride
        )));
    }
    let (w, b) = names::layer(names::SCORE_OUT);
    let s_out = tape.conv1d(out, bound.var(&w)?, bound.var(&b)?, 1, 0)?;
    let (w, b) = names::layer(names::DECONV1);
    let up1 = tape.conv_transpose1d(s_out, bound.var(&w)?, bound.var(&b)?, cfg.deconv1_stride)?;
    let up1 = centered_crop(tape, up1, skip_len, "deconv1")?;

    let (w, b) = names::layer(names::SCORE_SKIP);
    let s_skip = tape.conv1d(skip, bound.var(&w)?, bound.var(&b)?, 1, 0)?;
    let fused = tape.add(up1, s_skip)?;

    let (w, b) = names::layer(names::DECONV2);
    let up2 = tape.conv_transpose1d(fused, bound.var(&w)?, bound.var(&b)?, cfg.deconv2_stride)?;
    let (len2, _) = tape.value(up2).seq_dims()?;
    if len2 < pad.padded {
        return Err(Error::Arch(format!(
            "deconv2 produced length {len2}, shorter than the padded length {}",
            pad.padded
        )));
    }
    let offset = (len2 - pad.padded) / 2;
    let scores = tape.crop(up2, pad.original, offset)?;
    Ok(Decoded { scores, deconv2: up2 })
}

/// Auxiliary head: 1x1 conv to the embedding width, then a temporal mean.
pub fn aux_reconstruct(tape: &mut Tape, bound: &BoundParams, deconv2: Var) -> Result<Var> {
    let (w, b) = names::layer(names::AUX);
    let y = tape.conv1d(deconv2, bound.var(&w)?, bound.var(&b)?, 1, 0)?;
    tape.temporal_mean(y)
}

/// Thumbnail model: architecture, variant wiring and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: ArchConfig,
    pub variant: VariantConfig,
    /// Clip feature width.
    pub d_c: usize,
    /// Word embedding width.
    pub d_w: usize,
    pub params: ModelParams,
}

fn insert_conv<R: Rng + ?Sized>(
    params: &mut ModelParams,
    (w, b): (String, String),
    shape: [usize; 3],
    fan_in: f64,
    rng: &mut R,
) {
    let bound = 1.0 / fan_in.sqrt();
    let out_channels = if w.starts_with(names::DECONV1) || w.starts_with(names::DECONV2) {
        shape[1]
    } else {
        shape[2]
    };
    params.insert(w, Tensor::uniform(&shape, bound, rng));
    params.insert(b, Tensor::uniform(&[out_channels], bound, rng));
}

impl Model {
    /// Randomly initialized model, deterministic in `seed`.
    pub fn init(arch: ArchConfig, variant: VariantConfig, d_c: usize, d_w: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        if d_c == 0 || d_w == 0 {
            return Err(Error::Arch("feature and embedding widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::new();
        let input_dim = match variant.sentence_input() {
            SentenceInput::MeanEmbedding => d_c + d_w,
            _ => d_c,
        };

        let k = arch.conv_kernel;
        let mut cin = input_dim;
        for block in 0..NUM_BLOCKS {
            let cout = arch.block_channels[block];
            for layer in 0..arch.convs_per_block {
                insert_conv(
                    &mut params,
                    names::conv(block, layer),
                    [k, cin, cout],
                    (k * cin) as f64,
                    &mut rng,
                );
                cin = cout;
            }
        }
        insert_conv(
            &mut params,
            names::layer(names::FC6),
            [1, cin, arch.fc6_channels],
            cin as f64,
            &mut rng,
        );
        insert_conv(
            &mut params,
            names::layer(names::FC7),
            [1, arch.fc6_channels, arch.fc7_channels],
            arch.fc6_channels as f64,
            &mut rng,
        );
        insert_conv(
            &mut params,
            names::layer(names::SCORE_OUT),
            [1, arch.fc7_channels, NUM_CLASSES],
            arch.fc7_channels as f64,
            &mut rng,
        );
        insert_conv(
            &mut params,
            names::layer(names::SCORE_SKIP),
            [1, arch.skip_channels(), NUM_CLASSES],
            arch.skip_channels() as f64,
            &mut rng,
        );
        let overlap1 = (arch.deconv1_kernel / arch.deconv1_stride).max(1);
        insert_conv(
            &mut params,
            names::layer(names::DECONV1),
            [arch.deconv1_kernel, NUM_CLASSES, NUM_CLASSES],
            (NUM_CLASSES * overlap1) as f64,
            &mut rng,
        );
        let overlap2 = (arch.deconv2_kernel / arch.deconv2_stride).max(1);
        insert_conv(
            &mut params,
            names::layer(names::DECONV2),
            [arch.deconv2_kernel, NUM_CLASSES, NUM_CLASSES],
            (NUM_CLASSES * overlap2) as f64,
            &mut rng,
        );
        if variant.uses_aux_head() {
            insert_conv(
                &mut params,
                names::layer(names::AUX),
                [1, NUM_CLASSES, d_w],
                NUM_CLASSES as f64,
                &mut rng,
            );
        }
        if let Some(mode) = variant.modulation_mode() {
            if mode == ModulationMode::Predicted {
                sentence::init_params(&mut params, d_w, &mut rng)?;
            }
            sgtm::init_site(
                &mut params,
                mode,
                Site::Output,
                arch.fc7_channels,
                d_w,
                arch.sgtm_init,
                &mut rng,
            );
            sgtm::init_site(
                &mut params,
                mode,
                Site::Skip,
                arch.skip_channels(),
                d_w,
                arch.sgtm_init,
                &mut rng,
            );
        }
        Ok(Self {
            arch,
            variant,
            d_c,
            d_w,
            params,
        })
    }

    /// Width of the per-clip input to the encoder.
    pub fn input_dim(&self) -> usize {
        match self.variant.sentence_input() {
            SentenceInput::MeanEmbedding => self.d_c + self.d_w,
            _ => self.d_c,
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.num_scalars()
    }

    fn build_input(&self, video: &VideoClipFeatures, sentence: Option<&SentenceTokens>) -> Result<(Tensor, PadInfo)> {
        if video.dim() != self.d_c {
            return Err(shape_err!(
                "model expects {}-d clip features, video has {}",
                self.d_c,
                video.dim()
            ));
        }
        let pad = PadInfo::new(video.num_clips(), self.arch.total_stride());
        let features = match self.variant.sentence_input() {
            SentenceInput::MeanEmbedding => {
                let s = sentence.ok_or_else(|| self.missing_sentence())?;
                self.check_sentence(s)?;
                let mean = s.mean_embedding();
                let c = video.num_clips();
                let mut data = Vec::with_capacity(c * (self.d_c + self.d_w));
                for t in 0..c {
                    data.extend_from_slice(video.tensor().row(t));
                    data.extend_from_slice(&mean);
                }
                Tensor::new(vec![1, c, self.d_c + self.d_w], data)?
            }
            _ => video.tensor().clone(),
        };
        Ok((pad_clips(&features, pad), pad))
    }

    fn missing_sentence(&self) -> Error {
        Error::Usage(format!("variant {} needs a sentence", self.variant.variant))
    }

    fn check_sentence(&self, s: &SentenceTokens) -> Result<()> {
        if s.dim() != self.d_w {
            return Err(shape_err!(
                "model expects {}-d word embeddings, sentence has {}",
                self.d_w,
                s.dim()
            ));
        }
        Ok(())
    }

    /// Records the full forward pass on `tape`.
    ///
    /// `sentence` is ignored by sentence-blind variants and required by the
    /// others.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        video: &VideoClipFeatures,
        sentence: Option<&SentenceTokens>,
        training: bool,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        let (input, pad) = self.build_input(video, sentence)?;
        let z = match self.variant.sentence_input() {
            SentenceInput::Encoder => {
                let s = sentence.ok_or_else(|| self.missing_sentence())?;
                self.check_sentence(s)?;
                let sv = tape.constant(s.embeddings().clone());
                let w = AttentionWeights::from_bound(bound)?;
                Some(sentence::encode_sentence(tape, sv, &w)?)
            }
            _ => None,
        };
        let input = tape.constant(input);
        let enc = encode_video(tape, bound, input, pad, &self.arch, training, rng)?;
        let (out, skip) = match self.variant.modulation_mode() {
            None => (enc.out, enc.skip),
            Some(mode) => {
                let mp_out = sgtm::site_params(tape, bound, mode, Site::Output, self.arch.fc7_channels, z)?;
                let mp_skip = sgtm::site_params(tape, bound, mode, Site::Skip, self.arch.skip_channels(), z)?;
                (
                    sgtm::apply_sgtm(tape, enc.out, &mp_out)?,
                    sgtm::apply_sgtm(tape, enc.skip, &mp_skip)?,
                )
            }
        };
        let dec = decode_scores(tape, bound, out, skip, pad, &self.arch)?;
        let z_hat = if self.variant.uses_aux_head() {
            Some(aux_reconstruct(tape, bound, dec.deconv2)?)
        } else {
            None
        };
        Ok(ForwardOutput {
            scores: dec.scores,
            z_hat,
            z,
        })
    }

    /// Inference-mode scores.
    pub fn scores(&self, video: &VideoClipFeatures, sentence: Option<&SentenceTokens>) -> Result<ClipScores> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        // no dropout in inference, so the generator is never drawn from
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut tape, &bound, video, sentence, false, &mut rng)?;
        ClipScores::new(tape.value(out.scores).clone())
    }
}
