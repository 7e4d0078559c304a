//! Central finite-difference verification of tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Below this magnitude, errors are measured absolutely.
const ERROR_FLOOR: f64 = 1e-6;

/// Compares `backward()` against central differences for every element of
/// every input. The scalar objective is a fixed random projection of the
/// output of `f`. Returns the maximum relative error.
pub fn grad_check<F>(inputs: &[Tensor], seed: u64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let projection = Tensor::uniform(tape.value(out).shape(), 1.0, &mut rng);
    let loss = tape.weighted_sum(out, projection.clone())?;
    let grads = tape.backward(loss);

    let objective = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).dot(&projection))
    };

    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (idx, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[idx].shape()));
        for j in 0..inputs[idx].len() {
            let orig = probe[idx].data()[j];
            probe[idx].data_mut()[j] = orig + FD_STEP;
            let up = objective(&probe)?;
            probe[idx].data_mut()[j] = orig - FD_STEP;
            let down = objective(&probe)?;
            probe[idx].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic.data()[j], numeric));
        }
    }
    Ok(worst)
}

/// [`grad_check`] on inputs drawn uniformly from `[-1, 1)` with `seed`.
pub fn grad_check_shapes<F>(shapes: &[&[usize]], seed: u64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let inputs: Vec<Tensor> = shapes.iter().map(|s| Tensor::uniform(s, 1.0, &mut rng)).collect();
    grad_check(&inputs, seed, f)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(ERROR_FLOOR)
}

/// Uniform values in `[-1, 1)` whose magnitude is at least `margin`.
pub fn uniform_away_from_zero<R: Rng + ?Sized>(shape: &[usize], margin: f64, rng: &mut R) -> Tensor {
    let mut t = Tensor::uniform(shape, 1.0, rng);
    for v in t.data_mut() {
        let mag = margin + v.abs() * (1.0 - margin);
        *v = if *v < 0.0 { -mag } else { mag };
    }
    t
}
