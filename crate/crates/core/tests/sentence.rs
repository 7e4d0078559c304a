use dvtg_core::autograd::Tape;
use dvtg_core::sentence::{
    attention_dim, encode_sentence, encode_value, init_params, self_attention, AttentionWeights, WF1, WF2, WH,
};
use dvtg_core::{ModelParams, SentenceTokens, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Weights {
    wf1: Tensor,
    wf2: Tensor,
    wh: Tensor,
}

fn random_weights(dw: usize, seed: u64) -> Weights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = attention_dim(dw).unwrap();
    Weights {
        wf1: Tensor::uniform(&[d, dw], 1.0, &mut rng),
        wf2: Tensor::uniform(&[d, dw], 1.0, &mut rng),
        wh: Tensor::uniform(&[dw, dw], 1.0, &mut rng),
    }
}

/// `(map, output)` with `map[i][j]` the weight of word `i` for word `j`.
fn attend(s: &Tensor, w: &Weights) -> (Tensor, Tensor) {
    let mut tape = Tape::new();
    let sv = tape.constant(s.clone());
    let aw = AttentionWeights {
        wf1: tape.constant(w.wf1.clone()),
        wf2: tape.constant(w.wf2.clone()),
        wh: tape.constant(w.wh.clone()),
    };
    let a = self_attention(&mut tape, sv, &aw).unwrap();
    (tape.value(a.map).clone(), tape.value(a.output).clone())
}

fn encode(s: &Tensor, w: &Weights) -> Vec<f64> {
    let mut tape = Tape::new();
    let sv = tape.constant(s.clone());
    let aw = AttentionWeights {
        wf1: tape.constant(w.wf1.clone()),
        wf2: tape.constant(w.wf2.clone()),
        wh: tape.constant(w.wh.clone()),
    };
    let z = encode_sentence(&mut tape, sv, &aw).unwrap();
    tape.value(z).data().to_vec()
}

fn matvec(m: &Tensor, x: &[f64]) -> Vec<f64> {
    let cols = m.shape()[1];
    m.data()
        .chunks(cols)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn column(s: &Tensor, j: usize) -> Vec<f64> {
    let n = s.shape()[1];
    (0..s.shape()[0]).map(|i| s.data()[i * n + j]).collect()
}

/// Word-by-word evaluation of self-attention.
fn attention_oracle(s: &Tensor, w: &Weights) -> Vec<Vec<f64>> {
    let n = s.shape()[1];
    let words: Vec<Vec<f64>> = (0..n).map(|j| column(s, j)).collect();
    let f1: Vec<Vec<f64>> = words.iter().map(|x| matvec(&w.wf1, x)).collect();
    let f2: Vec<Vec<f64>> = words.iter().map(|x| matvec(&w.wf2, x)).collect();
    let h: Vec<Vec<f64>> = words.iter().map(|x| matvec(&w.wh, x)).collect();
    let mut out = Vec::new();
    for f2j in &f2 {
        let scores: Vec<f64> = (0..n)
            .map(|i| f1[i].iter().zip(f2j).map(|(a, b)| a * b).sum())
            .collect();
        let denom: f64 = scores.iter().map(|a| a.exp()).sum();
        let mut lambda = vec![0.0; h[0].len()];
        for i in 0..n {
            let phi = scores[i].exp() / denom;
            for (l, v) in lambda.iter_mut().zip(&h[i]) {
                *l += phi * v;
            }
        }
        out.push(lambda);
    }
    out
}

#[test]
fn attention_width_is_floor_of_eighth() {
    assert_eq!(attention_dim(300).unwrap(), 37);
    assert_eq!(attention_dim(8).unwrap(), 1);
    assert_eq!(attention_dim(64).unwrap(), 8);
    assert!(attention_dim(7).is_err());
}

#[test]
fn single_word_attends_to_itself() {
    let w = random_weights(8, 1);
    let s = Tensor::uniform(&[8, 1], 1.0, &mut ChaCha8Rng::seed_from_u64(2));
    let (map, out) = attend(&s, &w);
    assert_eq!(map.data(), &[1.0]);
    let want = matvec(&w.wh, s.data());
    for (a, b) in out.data().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
    let z = encode(&s, &w);
    for (a, b) in z.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn zero_query_map_gives_uniform_attention() {
    for zeroed in 0..2 {
        let mut w = random_weights(8, 3);
        if zeroed == 0 {
            w.wf1 = Tensor::zeros(w.wf1.shape());
        } else {
            w.wf2 = Tensor::zeros(w.wf2.shape());
        }
        let s = Tensor::uniform(&[8, 4], 1.0, &mut ChaCha8Rng::seed_from_u64(4));
        let (map, out) = attend(&s, &w);
        assert!(map.data().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let hs: Vec<Vec<f64>> = (0..4).map(|j| matvec(&w.wh, &column(&s, j))).collect();
        for r in 0..8 {
            let mean = hs.iter().map(|h| h[r]).sum::<f64>() / 4.0;
            for j in 0..4 {
                assert!((out.data()[r * 4 + j] - mean).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn attention_matches_double_loop() {
    let w = random_weights(8, 5);
    let s = Tensor::uniform(&[8, 3], 1.0, &mut ChaCha8Rng::seed_from_u64(6));
    let (_, out) = attend(&s, &w);
    let want = attention_oracle(&s, &w);
    for (j, lambda) in want.iter().enumerate() {
        for (r, v) in lambda.iter().enumerate() {
            assert!((out.data()[r * 3 + j] - v).abs() < 1e-10);
        }
    }
}

#[test]
fn encoding_is_mean_of_attended_words() {
    let w = random_weights(16, 7);
    let s = Tensor::uniform(&[16, 4], 1.0, &mut ChaCha8Rng::seed_from_u64(8));
    let att = attention_oracle(&s, &w);
    let z = encode(&s, &w);
    for (r, v) in z.iter().enumerate() {
        let want = att.iter().map(|l| l[r]).sum::<f64>() / 4.0;
        assert!((v - want).abs() < 1e-10);
    }
}

#[test]
fn duplicated_word_encodes_like_one_word() {
    let w = random_weights(8, 9);
    let x = Tensor::uniform(&[8, 1], 1.0, &mut ChaCha8Rng::seed_from_u64(10));
    let want = matvec(&w.wh, x.data());
    for n in [2, 5] {
        let words = vec![x.data().to_vec(); n];
        let s = SentenceTokens::from_words(&words).unwrap();
        let z = encode(s.embeddings(), &w);
        for (a, b) in z.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn sentence_tokens_validate() {
    assert!(SentenceTokens::new(Tensor::zeros(&[4, 0])).is_err());
    assert!(SentenceTokens::new(Tensor::zeros(&[4])).is_err());
    assert!(SentenceTokens::new(Tensor::new(vec![1, 1], vec![f64::NAN]).unwrap()).is_err());
    let s = SentenceTokens::from_words(&[vec![1.0, 2.0], vec![3.0, 5.0]]).unwrap();
    assert_eq!(s.dim(), 2);
    assert_eq!(s.num_words(), 2);
    assert_eq!(s.word(1), vec![3.0, 5.0]);
    assert_eq!(s.mean_embedding(), vec![2.0, 3.5]);
}

#[test]
fn init_is_scaled_uniform() {
    let mut params = ModelParams::new();
    init_params(&mut params, 64, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    assert_eq!(params.require(WF1).unwrap().shape(), &[8, 64]);
    assert_eq!(params.require(WF2).unwrap().shape(), &[8, 64]);
    assert_eq!(params.require(WH).unwrap().shape(), &[64, 64]);
    for (_, t) in params.iter() {
        assert!(t.data().iter().all(|v| v.abs() <= 1.0 / 8.0));
    }
    let s = SentenceTokens::new(Tensor::uniform(&[64, 3], 1.0, &mut ChaCha8Rng::seed_from_u64(12))).unwrap();
    assert_eq!(encode_value(&s, &params).unwrap().shape(), &[64]);
}
