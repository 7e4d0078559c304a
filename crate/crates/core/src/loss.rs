//! Training objectives.

use crate::autograd::{Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::metrics::ThumbnailAnnotation;
use crate::model::{Variant, VariantConfig};

/// Mean two-class cross entropy of clip scores against a thumbnail.
pub fn thumb_loss(tape: &mut Tape, scores: Var, gt: &ThumbnailAnnotation) -> Result<Var> {
    let (clips, _) = tape.value(scores).seq_dims()?;
    if clips != gt.clips() {
        return Err(shape_err!(
            "scores cover {} clips, annotation covers {}",
            clips,
            gt.clips()
        ));
    }
    tape.softmax_cross_entropy(scores, &gt.labels())
}

/// Squared L2 distance between the sentence vector and its reconstruction.
pub fn aux_loss(tape: &mut Tape, z: Var, z_hat: Var) -> Result<Var> {
    tape.sum_sq_diff(z, z_hat)
}

/// Combines the loss terms the variant trains with. `aux_weight` scales
/// the auxiliary term (1.0 is the plain sum).
pub fn final_loss(
    tape: &mut Tape,
    thumb: Option<Var>,
    aux: Option<Var>,
    variant: &VariantConfig,
    aux_weight: f64,
) -> Result<Var> {
    let missing = |what: &str| Error::Usage(format!("variant {} needs the {what} loss", variant.variant));
    let weighted_aux = |tape: &mut Tape, a: Var| {
        if aux_weight == 1.0 {
            a
        } else {
            tape.scale(a, aux_weight)
        }
    };
    match (variant.uses_thumb_loss(), variant.uses_aux_loss()) {
        (true, true) => {
            let t = thumb.ok_or_else(|| missing("thumbnail"))?;
            let a = aux.ok_or_else(|| missing("auxiliary"))?;
            let a = weighted_aux(tape, a);
            tape.add(t, a)
        }
        (true, false) => thumb.ok_or_else(|| missing("thumbnail")),
        (false, true) => {
            let a = aux.ok_or_else(|| missing("auxiliary"))?;
            Ok(weighted_aux(tape, a))
        }
        (false, false) => Err(Error::Usage(format!(
            "variant {} has no active loss terms",
            variant.variant
        ))),
    }
}

/// Whether `variant` is trained without thumbnail annotations.
pub fn is_unsupervised(variant: Variant) -> bool {
    !VariantConfig::new(variant).uses_thumb_loss()
}
