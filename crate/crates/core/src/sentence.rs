//! Self-attention sentence encoder.
//!
//! Words are columns of a `D_w x N` matrix. Two `d x D_w` projections score
//! every word pair, a softmax over the attending words normalizes each
//! column, a `D_w x D_w` projection produces the attended values, and the
//! attended columns are averaged into one sentence vector.

use rand::Rng;

use crate::autograd::{Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::params::{BoundParams, ModelParams};
use crate::tensor::Tensor;

pub const WF1: &str = "senc.wf1";
pub const WF2: &str = "senc.wf2";
pub const WH: &str = "senc.wh";

/// Word embeddings of one sentence, one column per word.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceTokens {
    embeddings: Tensor,
}

impl SentenceTokens {
    /// `embeddings` must be `D_w x N` with `N >= 1` and no NaN.
    pub fn new(embeddings: Tensor) -> Result<Self> {
        let (dw, n) = match embeddings.shape() {
            [dw, n] => (*dw, *n),
            s => return Err(shape_err!("sentence must be D_w x N, got {:?}", s)),
        };
        if n == 0 {
            return Err(Error::Data("sentence has no words".into()));
        }
        if dw == 0 {
            return Err(Error::Data("zero-dimensional word embeddings".into()));
        }
        if embeddings.data().iter().any(|v| v.is_nan()) {
            return Err(Error::Data("sentence embeddings contain NaN".into()));
        }
        Ok(Self { embeddings })
    }

    /// Builds the `D_w x N` matrix from per-word vectors.
    pub fn from_words(words: &[Vec<f64>]) -> Result<Self> {
        let n = words.len();
        let dw = words.first().map(Vec::len).unwrap_or(0);
        if words.iter().any(|w| w.len() != dw) {
            return Err(shape_err!("word vectors differ in length"));
        }
        let mut data = vec![0.0; dw * n];
        for (j, w) in words.iter().enumerate() {
            for (i, v) in w.iter().enumerate() {
                data[i * n + j] = *v;
            }
        }
        Self::new(Tensor::new(vec![dw, n], data)?)
    }

    pub fn embeddings(&self) -> &Tensor {
        &self.embeddings
    }

    pub fn dim(&self) -> usize {
        self.embeddings.shape()[0]
    }

    pub fn num_words(&self) -> usize {
        self.embeddings.shape()[1]
    }

    /// Column `j` as a vector.
    pub fn word(&self, j: usize) -> Vec<f64> {
        let n = self.num_words();
        (0..self.dim()).map(|i| self.embeddings.data()[i * n + j]).collect()
    }

    /// Average word embedding.
    pub fn mean_embedding(&self) -> Vec<f64> {
        let n = self.num_words();
        self.embeddings
            .data()
            .chunks(n)
            .map(|row| row.iter().sum::<f64>() / n as f64)
            .collect()
    }
}

/// Attention projection width for embedding dimension `dw`.
pub fn attention_dim(dw: usize) -> Result<usize> {
    let d = dw / 8;
    if d == 0 {
        return Err(Error::Arch(format!(
            "embedding dimension {dw} too small: attention width floor(D_w/8) must be >= 1"
        )));
    }
    Ok(d)
}

/// Adds the three attention projections to `params`.
pub fn init_params<R: Rng + ?Sized>(params: &mut ModelParams, dw: usize, rng: &mut R) -> Result<()> {
    let d = attention_dim(dw)?;
    let bound = 1.0 / (dw as f64).sqrt();
    params.insert(WF1, Tensor::uniform(&[d, dw], bound, rng));
    params.insert(WF2, Tensor::uniform(&[d, dw], bound, rng));
    params.insert(WH, Tensor::uniform(&[dw, dw], bound, rng));
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights {
    pub wf1: Var,
    pub wf2: Var,
    pub wh: Var,
}

impl AttentionWeights {
    pub fn from_bound(bound: &BoundParams) -> Result<Self> {
        Ok(Self {
            wf1: bound.var(WF1)?,
            wf2: bound.var(WF2)?,
            wh: bound.var(WH)?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Attended {
    /// `N x N`; entry `(i, j)` is the weight word `i` receives when
    /// attending from word `j`. Columns sum to one.
    pub map: Var,
    /// `D_w x N` attended features.
    pub output: Var,
}

/// Self-attention over the columns of `s` (`D_w x N`).
pub fn self_attention(tape: &mut Tape, s: Var, w: &AttentionWeights) -> Result<Attended> {
    match tape.value(s).shape() {
        [_, 0] => return Err(Error::Data("sentence has no words".into())),
        [_, _] => {}
        shape => return Err(shape_err!("sentence must be D_w x N, got {:?}", shape)),
    }
    let f1 = tape.matmul(w.wf1, s)?;
    let f2 = tape.matmul(w.wf2, s)?;
    let f1t = tape.transpose(f1)?;
    let scores = tape.matmul(f1t, f2)?;
    let map = tape.softmax_cols(scores)?;
    let h = tape.matmul(w.wh, s)?;
    let output = tape.matmul(h, map)?;
    Ok(Attended { map, output })
}

/// Sentence vector `z`: the average of the attended word features.
pub fn encode_sentence(tape: &mut Tape, s: Var, w: &AttentionWeights) -> Result<Var> {
    let attended = self_attention(tape, s, w)?;
    tape.mean_axis(attended.output, 1)
}

/// Forward-only encoding with the parameters in `params`.
pub fn encode_value(sentence: &SentenceTokens, params: &ModelParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let w = AttentionWeights {
        wf1: tape.constant(params.require(WF1)?.clone()),
        wf2: tape.constant(params.require(WF2)?.clone()),
        wh: tape.constant(params.require(WH)?.clone()),
    };
    let s = tape.constant(sentence.embeddings().clone());
    let z = encode_sentence(&mut tape, s, &w)?;
    Ok(tape.value(z).clone())
}
