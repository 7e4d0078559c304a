//! Sentence-guided temporal modulation.
//!
//! An activation `A` (`1 x M x C`) is normalized per channel with its own
//! temporal mean and deviation, then scaled and shifted by per-channel
//! `alpha`, `beta`. The same affine applies at every time step. Where the
//! affine parameters come from is the [`ModulationMode`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{ChannelOp, Tape, Var};
use crate::error::{shape_err, Result};
use crate::params::{BoundParams, ModelParams};
use crate::tensor::Tensor;

/// Default bound of the uniform init of the sentence-to-affine weights.
/// The bias starts at `(1, .., 1, 0, .., 0)` so modulation starts near
/// the identity.
pub const FC_INIT_SCALE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulationMode {
    /// `alpha = 1`, `beta = 0`.
    FixedIdentity,
    /// `alpha`, `beta` are free parameters.
    Learned,
    /// `alpha`, `beta` come from a fully-connected map of the sentence vector.
    Predicted,
}

/// The two places modulation is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Site {
    /// Last encoder output (after fc7).
    Output,
    /// Skip activation from the conv4 block.
    Skip,
}

impl Site {
    pub const ALL: [Site; 2] = [Site::Output, Site::Skip];

    fn index(self) -> usize {
        match self {
            Site::Output => 1,
            Site::Skip => 2,
        }
    }

    pub fn fc_weight(self) -> String {
        format!("sgtm{}.fc.weight", self.index())
    }

    pub fn fc_bias(self) -> String {
        format!("sgtm{}.fc.bias", self.index())
    }

    pub fn alpha(self) -> String {
        format!("in{}.alpha", self.index())
    }

    pub fn beta(self) -> String {
        format!("in{}.beta", self.index())
    }
}

/// Per-channel affine parameters on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ModulationParams {
    pub alpha: Var,
    pub beta: Var,
}

/// Adds the parameters `mode` needs at `site` for `channels` channels.
pub fn init_site<R: Rng + ?Sized>(
    params: &mut ModelParams,
    mode: ModulationMode,
    site: Site,
    channels: usize,
    dw: usize,
    fc_init: f64,
    rng: &mut R,
) {
    match mode {
        ModulationMode::FixedIdentity => {}
        ModulationMode::Learned => {
            params.insert(site.alpha(), Tensor::ones(&[channels]));
            params.insert(site.beta(), Tensor::zeros(&[channels]));
        }
        ModulationMode::Predicted => {
            params.insert(site.fc_weight(), Tensor::uniform(&[dw, 2 * channels], fc_init, rng));
            params.insert(site.fc_bias(), identity_bias(channels));
        }
    }
}

/// `(1, .., 1, 0, .., 0)` of length `2 * channels`.
pub fn identity_bias(channels: usize) -> Tensor {
    let mut b = vec![1.0; channels];
    b.extend(std::iter::repeat_n(0.0, channels));
    Tensor::vector(b)
}

/// Maps the sentence vector to `(alpha, beta)`: the first half of the
/// fully-connected output is `alpha`, the second half `beta`.
pub fn predict_modulation(tape: &mut Tape, z: Var, fc_weight: Var, fc_bias: Var) -> Result<ModulationParams> {
    let out = tape.linear(z, fc_weight, fc_bias)?;
    let width = match tape.value(out).shape() {
        [w] if w % 2 == 0 => *w,
        s => {
            return Err(shape_err!(
                "modulation head must produce an even-length vector, got {:?}",
                s
            ))
        }
    };
    let half = width / 2;
    let alpha = tape.narrow(out, 0, 0, half)?;
    let beta = tape.narrow(out, 0, half, half)?;
    Ok(ModulationParams { alpha, beta })
}

/// Resolves the affine parameters for `site` under `mode`.
pub fn site_params(
    tape: &mut Tape,
    bound: &BoundParams,
    mode: ModulationMode,
    site: Site,
    channels: usize,
    z: Option<Var>,
) -> Result<ModulationParams> {
    match mode {
        ModulationMode::FixedIdentity => Ok(ModulationParams {
            alpha: tape.constant(Tensor::ones(&[channels])),
            beta: tape.constant(Tensor::zeros(&[channels])),
        }),
        ModulationMode::Learned => Ok(ModulationParams {
            alpha: bound.var(&site.alpha())?,
            beta: bound.var(&site.beta())?,
        }),
        ModulationMode::Predicted => {
            let z = z.ok_or_else(|| crate::Error::Usage("predicted modulation needs a sentence vector".into()))?;
            predict_modulation(tape, z, bound.var(&site.fc_weight())?, bound.var(&site.fc_bias())?)
        }
    }
}

/// `alpha * (A - mu) / sigma + beta`, channel-wise, with temporal
/// statistics of `a` itself.
pub fn apply_sgtm(tape: &mut Tape, a: Var, mp: &ModulationParams) -> Result<Var> {
    let (m, c) = tape.value(a).seq_dims()?;
    if m == 0 {
        return Err(shape_err!("modulated activation has no time steps"));
    }
    for (what, v) in [("alpha", mp.alpha), ("beta", mp.beta)] {
        if tape.value(v).shape() != [c] {
            return Err(shape_err!("{} must be [{}], got {:?}", what, c, tape.value(v).shape()));
        }
    }
    let (mu, sigma) = tape.temporal_stats(a)?;
    let centered = tape.channel(a, mu, ChannelOp::Sub)?;
    let normalized = tape.channel(centered, sigma, ChannelOp::Div)?;
    let scaled = tape.channel(normalized, mp.alpha, ChannelOp::Mul)?;
    tape.channel(scaled, mp.beta, ChannelOp::Add)
}
