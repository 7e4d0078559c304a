use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sgtm::ModulationMode;

/// Layer sizes of the thumbnail network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    /// Output channels of conv1..conv5.
    pub block_channels: Vec<usize>,
    pub convs_per_block: usize,
    pub fc6_channels: usize,
    pub fc7_channels: usize,
    /// Odd kernel of the block convolutions ("same" zero padding).
    pub conv_kernel: usize,
    pub pool_size: usize,
    pub pool_stride: usize,
    pub dropout_p: f64,
    pub deconv1_kernel: usize,
    pub deconv1_stride: usize,
    pub deconv2_kernel: usize,
    pub deconv2_stride: usize,
    /// Uniform init bound of the sentence-to-modulation weights.
    pub sgtm_init: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            block_channels: vec![32, 64, 128, 256, 256],
            convs_per_block: 2,
            fc6_channels: 256,
            fc7_channels: 256,
            conv_kernel: 3,
            pool_size: 2,
            pool_stride: 2,
            dropout_p: 0.5,
            deconv1_kernel: 4,
            deconv1_stride: 2,
            deconv2_kernel: 32,
            deconv2_stride: 16,
            sgtm_init: crate::sgtm::FC_INIT_SCALE,
        }
    }
}

pub const NUM_BLOCKS: usize = 5;
/// Index (0-based) of the block whose pooled output feeds the skip path.
pub const SKIP_BLOCK: usize = 3;
/// Score channels: non-thumbnail, thumbnail.
pub const NUM_CLASSES: usize = 2;

impl ArchConfig {
    /// Four channels per block; used for fast tests and desk-scale runs.
    pub fn tiny() -> Self {
        Self {
            block_channels: vec![4; NUM_BLOCKS],
            fc6_channels: 8,
            fc7_channels: 8,
            ..Self::default()
        }
    }

    /// Temporal reduction of the encoder output.
    pub fn total_stride(&self) -> usize {
        self.pool_stride.pow(NUM_BLOCKS as u32)
    }

    pub fn skip_channels(&self) -> usize {
        self.block_channels[SKIP_BLOCK]
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Arch(msg));
        if self.block_channels.len() != NUM_BLOCKS {
            return fail(format!(
                "expected {NUM_BLOCKS} block widths, got {}",
                self.block_channels.len()
            ));
        }
        if self.block_channels.contains(&0) || self.fc6_channels == 0 || self.fc7_channels == 0 {
            return fail("channel counts must be positive".into());
        }
        if self.convs_per_block == 0 {
            return fail("each block needs at least one convolution".into());
        }
        if self.conv_kernel.is_multiple_of(2) {
            return fail(format!("conv kernel {} must be odd", self.conv_kernel));
        }
        if self.pool_stride < 2 || self.pool_size != self.pool_stride {
            return fail("pooling must be non-overlapping with stride >= 2".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return fail(format!("dropout {} not in [0, 1)", self.dropout_p));
        }
        if !(self.sgtm_init >= 0.0 && self.sgtm_init.is_finite()) {
            return fail(format!("bad modulation init bound {}", self.sgtm_init));
        }
        if self.deconv1_stride != self.pool_stride {
            return fail("deconv1 must undo exactly one pooling stage".into());
        }
        if self.deconv1_stride * self.deconv2_stride != self.total_stride() {
            return fail(format!(
                "deconv strides {} x {} do not restore the encoder stride {}",
                self.deconv1_stride,
                self.deconv2_stride,
                self.total_stride()
            ));
        }
        if self.deconv1_kernel < self.deconv1_stride || self.deconv2_kernel < self.deconv2_stride {
            return fail("deconv kernels must be at least as long as their strides".into());
        }
        Ok(())
    }
}

/// Model variants: the full model, its ablations, and the generic baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Fcsn,
    InFcsn,
    InFcsnConcat,
    GuidedDvtg,
    GuidedDvtgNa,
    GuidedDvtgUnsup,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Fcsn,
        Variant::InFcsn,
        Variant::InFcsnConcat,
        Variant::GuidedDvtg,
        Variant::GuidedDvtgNa,
        Variant::GuidedDvtgUnsup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Fcsn => "fcsn",
            Variant::InFcsn => "in_fcsn",
            Variant::InFcsnConcat => "in_fcsn_concat",
            Variant::GuidedDvtg => "guided_dvtg",
            Variant::GuidedDvtgNa => "guided_dvtg_na",
            Variant::GuidedDvtgUnsup => "guided_dvtg_unsup",
        }
    }

    /// Modulation used when none is requested explicitly.
    pub fn default_mode(self) -> Option<ModulationMode> {
        match self {
            Variant::Fcsn => None,
            Variant::InFcsn | Variant::InFcsnConcat => Some(ModulationMode::Learned),
            _ => Some(ModulationMode::Predicted),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::Usage(format!("unknown variant `{s}`")))
    }
}

/// How a variant consumes the sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SentenceInput {
    None,
    /// Mean word embedding appended to every clip feature.
    MeanEmbedding,
    /// Self-attention encoder feeding predicted modulation.
    Encoder,
}

/// A variant plus its modulation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub variant: Variant,
    pub modulation: Option<ModulationMode>,
}

impl VariantConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            modulation: variant.default_mode(),
        }
    }

    /// Overrides the modulation mode. The instance-norm baselines accept
    /// fixed or learned affine parameters; the guided variants only accept
    /// predicted ones; the plain network has no modulation.
    pub fn with_mode(variant: Variant, mode: ModulationMode) -> Result<Self> {
        let ok = match variant {
            Variant::Fcsn => false,
            Variant::InFcsn | Variant::InFcsnConcat => mode != ModulationMode::Predicted,
            _ => mode == ModulationMode::Predicted,
        };
        if !ok {
            return Err(Error::Usage(format!(
                "variant {variant} does not support {mode:?} modulation"
            )));
        }
        Ok(Self {
            variant,
            modulation: Some(mode),
        })
    }

    pub fn sentence_input(&self) -> SentenceInput {
        match self.variant {
            Variant::Fcsn | Variant::InFcsn => SentenceInput::None,
            Variant::InFcsnConcat => SentenceInput::MeanEmbedding,
            _ => SentenceInput::Encoder,
        }
    }

    pub fn uses_sentence(&self) -> bool {
        self.sentence_input() != SentenceInput::None
    }

    pub fn modulation_mode(&self) -> Option<ModulationMode> {
        self.modulation
    }

    pub fn uses_aux_head(&self) -> bool {
        matches!(self.variant, Variant::GuidedDvtg | Variant::GuidedDvtgUnsup)
    }

    pub fn uses_thumb_loss(&self) -> bool {
        self.variant != Variant::GuidedDvtgUnsup
    }

    pub fn uses_aux_loss(&self) -> bool {
        self.uses_aux_head()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_and_tiny_configs_validate() {
        ArchConfig::default().validate().unwrap();
        ArchConfig::tiny().validate().unwrap();
        assert_eq!(ArchConfig::default().total_stride(), 32);
    }

    #[test]
    fn mismatched_deconv_strides_rejected() {
        let cfg = ArchConfig {
            deconv2_stride: 8,
            deconv2_kernel: 16,
            ..ArchConfig::tiny()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn variant_flags() {
        let g = VariantConfig::new(Variant::GuidedDvtg);
        assert!(g.uses_thumb_loss() && g.uses_aux_loss() && g.uses_aux_head());
        assert_eq!(g.modulation_mode(), Some(ModulationMode::Predicted));

        let na = VariantConfig::new(Variant::GuidedDvtgNa);
        assert!(na.uses_thumb_loss() && !na.uses_aux_loss() && !na.uses_aux_head());

        let un = VariantConfig::new(Variant::GuidedDvtgUnsup);
        assert!(!un.uses_thumb_loss() && un.uses_aux_loss());

        let inf = VariantConfig::new(Variant::InFcsn);
        assert!(!inf.uses_sentence());
        assert_eq!(inf.modulation_mode(), Some(ModulationMode::Learned));

        let cat = VariantConfig::new(Variant::InFcsnConcat);
        assert_eq!(cat.sentence_input(), SentenceInput::MeanEmbedding);

        let f = VariantConfig::new(Variant::Fcsn);
        assert!(!f.uses_sentence() && f.modulation_mode().is_none());
    }

    #[test]
    fn mode_overrides_are_checked() {
        assert!(VariantConfig::with_mode(Variant::InFcsn, ModulationMode::FixedIdentity).is_ok());
        assert!(VariantConfig::with_mode(Variant::InFcsn, ModulationMode::Predicted).is_err());
        assert!(VariantConfig::with_mode(Variant::GuidedDvtg, ModulationMode::Learned).is_err());
        assert!(VariantConfig::with_mode(Variant::Fcsn, ModulationMode::Learned).is_err());
    }

    #[test]
    fn variant_names_parse() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("Guided-DVTG-NA".parse::<Variant>().unwrap(), Variant::GuidedDvtgNa);
        assert!("nope".parse::<Variant>().is_err());
    }
}
