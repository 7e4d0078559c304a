use dvtg_core::autograd::Tape;
use dvtg_core::sgtm::{apply_sgtm, identity_bias, predict_modulation, ModulationParams};
use dvtg_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn modulate(a: &Tensor, alpha: &[f64], beta: &[f64]) -> Tensor {
    let mut tape = Tape::new();
    let av = tape.constant(a.clone());
    let mp = ModulationParams {
        alpha: tape.constant(Tensor::vector(alpha.to_vec())),
        beta: tape.constant(Tensor::vector(beta.to_vec())),
    };
    let y = apply_sgtm(&mut tape, av, &mp).unwrap();
    tape.value(y).clone()
}

fn predict(z: &Tensor, w: &Tensor, b: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let mut tape = Tape::new();
    let (zv, wv, bv) = (
        tape.constant(z.clone()),
        tape.constant(w.clone()),
        tape.constant(b.clone()),
    );
    let mp = predict_modulation(&mut tape, zv, wv, bv).unwrap();
    (
        tape.value(mp.alpha).data().to_vec(),
        tape.value(mp.beta).data().to_vec(),
    )
}

#[test]
fn identity_bias_gives_identity_modulation() {
    let z = Tensor::uniform(&[6], 1.0, &mut ChaCha8Rng::seed_from_u64(1));
    let (alpha, beta) = predict(&z, &Tensor::zeros(&[6, 8]), &identity_bias(4));
    assert_eq!(alpha, vec![1.0; 4]);
    assert_eq!(beta, vec![0.0; 4]);
}

#[test]
fn zero_head_zeroes_the_activation() {
    let z = Tensor::uniform(&[6], 1.0, &mut ChaCha8Rng::seed_from_u64(2));
    let (alpha, beta) = predict(&z, &Tensor::zeros(&[6, 4]), &Tensor::zeros(&[4]));
    let a = Tensor::uniform(&[1, 5, 2], 1.0, &mut ChaCha8Rng::seed_from_u64(3));
    assert!(modulate(&a, &alpha, &beta).data().iter().all(|&v| v == 0.0));
}

#[test]
fn prediction_is_affine_then_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let z = Tensor::uniform(&[5], 1.0, &mut rng);
    let w = Tensor::uniform(&[5, 6], 1.0, &mut rng);
    let b = Tensor::uniform(&[6], 1.0, &mut rng);
    let (alpha, beta) = predict(&z, &w, &b);
    let full: Vec<f64> = (0..6)
        .map(|o| b.data()[o] + (0..5).map(|i| z.data()[i] * w.data()[i * 6 + o]).sum::<f64>())
        .collect();
    for (got, want) in alpha.iter().chain(&beta).zip(&full) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn prediction_rejects_mismatched_head() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::zeros(&[5]));
    let w = tape.constant(Tensor::zeros(&[4, 6]));
    let b = tape.constant(Tensor::zeros(&[6]));
    assert!(predict_modulation(&mut tape, z, w, b).is_err());
    let w = tape.constant(Tensor::zeros(&[5, 5]));
    let b = tape.constant(Tensor::zeros(&[5]));
    assert!(predict_modulation(&mut tape, z, w, b).is_err());
}

#[test]
fn unit_pair_is_nearly_unchanged() {
    let a = Tensor::new(vec![1, 2, 1], vec![1.0, -1.0]).unwrap();
    let y = modulate(&a, &[1.0], &[0.0]);
    let s = (1.0f64 + 1e-5).sqrt();
    assert_eq!(y.data(), &[1.0 / s, -1.0 / s]);
}

#[test]
fn constant_channel_collapses_to_beta() {
    let a = Tensor::new(vec![1, 3, 1], vec![5.0; 3]).unwrap();
    for (alpha, beta) in [(1.0, 0.0), (3.5, -2.0), (-1.0, 0.25)] {
        assert_eq!(modulate(&a, &[alpha], &[beta]).data(), &[beta; 3]);
    }
}

#[test]
fn matches_direct_normalization() {
    let a = Tensor::uniform(&[1, 4, 2], 2.0, &mut ChaCha8Rng::seed_from_u64(5));
    let (alpha, beta) = ([2.0, 0.5], [1.0, -1.0]);
    let y = modulate(&a, &alpha, &beta);
    for c in 0..2 {
        let col: Vec<f64> = (0..4).map(|t| a.data()[t * 2 + c]).collect();
        let mu = col.iter().sum::<f64>() / 4.0;
        let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 4.0;
        for (t, x) in col.iter().enumerate() {
            let want = alpha[c] * (x - mu) / (var + 1e-5).sqrt() + beta[c];
            assert!((y.data()[t * 2 + c] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn wrong_parameter_length_is_rejected() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[1, 4, 3]));
    let mp = ModulationParams {
        alpha: tape.constant(Tensor::ones(&[2])),
        beta: tape.constant(Tensor::zeros(&[3])),
    };
    assert!(apply_sgtm(&mut tape, a, &mp).is_err());
}
