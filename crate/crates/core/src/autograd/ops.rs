use rand::Rng;

use super::{Op, Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Elementwise operation between a tensor and a vector broadcast along its
/// last axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Variance floor inside the temporal standard deviation.
pub const STATS_EPS: f64 = 1e-5;

impl Tape {
    /// Temporal convolution over a `1 x L x Cin` sequence with a
    /// `k x Cin x Cout` kernel and zero padding.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let (len, cin) = self.value(x).seq_dims()?;
        let (k, wcin, cout) = match self.value(w).shape() {
            [k, i, o] => (*k, *i, *o),
            s => return Err(shape_err!("conv1d weight must be k x Cin x Cout, got {:?}", s)),
        };
        if wcin != cin {
            return Err(shape_err!(
                "conv1d weight expects {} input channels, input has {}",
                wcin,
                cin
            ));
        }
        if self.value(b).shape() != [cout] {
            return Err(shape_err!(
                "conv1d bias must be [{}], got {:?}",
                cout,
                self.value(b).shape()
            ));
        }
        if k == 0 || stride == 0 {
            return Err(shape_err!("conv1d needs k >= 1 and stride >= 1"));
        }
        if len + 2 * padding < k {
            return Err(shape_err!(
                "conv1d kernel {} longer than padded input {}",
                k,
                len + 2 * padding
            ));
        }
        let out_len = (len + 2 * padding - k) / stride + 1;
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; out_len * cout];
        for t in 0..out_len {
            let row = &mut out[t * cout..(t + 1) * cout];
            row.copy_from_slice(bd);
            for j in 0..k {
                let pos = (t * stride + j) as isize - padding as isize;
                if pos < 0 || pos as usize >= len {
                    continue;
                }
                let xrow = &xd[pos as usize * cin..(pos as usize + 1) * cin];
                for (i, &xv) in xrow.iter().enumerate() {
                    let wrow = &wd[(j * cin + i) * cout..(j * cin + i + 1) * cout];
                    for (o, &wv) in wrow.iter().enumerate() {
                        row[o] += wv * xv;
                    }
                }
            }
        }
        let value = Tensor::new(vec![1, out_len, cout], out)?;
        Ok(self.push(
            value,
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                padding,
            },
            &[x, w, b],
        ))
    }

    /// Fractionally-strided convolution: a `1 x L x Cin` input with a
    /// `k x Cout x Cin` kernel gives `1 x ((L-1)*stride + k) x Cout`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let (len, cin) = self.value(x).seq_dims()?;
        let (k, cout, wcin) = match self.value(w).shape() {
            [k, o, i] => (*k, *o, *i),
            s => return Err(shape_err!("transposed conv weight must be k x Cout x Cin, got {:?}", s)),
        };
        if wcin != cin {
            return Err(shape_err!(
                "transposed conv weight expects {} input channels, input has {}",
                wcin,
                cin
            ));
        }
        if self.value(b).shape() != [cout] {
            return Err(shape_err!(
                "transposed conv bias must be [{}], got {:?}",
                cout,
                self.value(b).shape()
            ));
        }
        if stride == 0 || k < stride {
            return Err(shape_err!(
                "transposed conv needs 1 <= stride <= k (stride {}, k {})",
                stride,
                k
            ));
        }
        let out_len = (len - 1) * stride + k;
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let bd = self.value(b).data();
        let mut out = Vec::with_capacity(out_len * cout);
        for _ in 0..out_len {
            out.extend_from_slice(bd);
        }
        for t in 0..len {
            let xrow = &xd[t * cin..(t + 1) * cin];
            for j in 0..k {
                let orow = &mut out[(t * stride + j) * cout..(t * stride + j + 1) * cout];
                for (o, ov) in orow.iter_mut().enumerate() {
                    let wrow = &wd[(j * cout + o) * cin..(j * cout + o + 1) * cin];
                    *ov += wrow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        let value = Tensor::new(vec![1, out_len, cout], out)?;
        Ok(self.push(value, Op::ConvTranspose1d { x, w, b, stride }, &[x, w, b]))
    }

    pub fn max_pool1d(&mut self, x: Var, size: usize, stride: usize) -> Result<Var> {
        let (len, c) = self.value(x).seq_dims()?;
        if size == 0 || stride == 0 {
            return Err(shape_err!("max_pool1d needs size >= 1 and stride >= 1"));
        }
        if len < size {
            return Err(shape_err!("max_pool1d window {} exceeds length {}", size, len));
        }
        let out_len = (len - size) / stride + 1;
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(out_len * c);
        let mut argmax = Vec::with_capacity(out_len * c);
        for t in 0..out_len {
            for ch in 0..c {
                let mut best = t * stride * c + ch;
                for j in 1..size {
                    let idx = (t * stride + j) * c + ch;
                    // strict comparison keeps the earliest maximum
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                out.push(xd[best]);
                argmax.push(best);
            }
        }
        let value = Tensor::new(vec![1, out_len, c], out)?;
        Ok(self.push(value, Op::MaxPool1d { x, argmax }, &[x]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|v| v.max(0.0)).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Relu { x }, &[x])
    }

    /// Inverted dropout. Outside training, or with `p == 0`, returns `x`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Param(format!("dropout probability {p} not in [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - p);
        let src = self.value(x);
        let mask: Vec<f64> = (0..src.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
            .collect();
        let data = src.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Dropout { x, mask }, &[x]))
    }

    /// Affine map over the last axis: `[..., Din] x [Din, Dout] + [Dout]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let din = *xs
            .last()
            .ok_or_else(|| shape_err!("linear input must have rank >= 1"))?;
        let dout = match self.value(w).shape() {
            [i, o] if *i == din => *o,
            s => return Err(shape_err!("linear weight must be [{}, Dout], got {:?}", din, s)),
        };
        if self.value(b).shape() != [dout] {
            return Err(shape_err!(
                "linear bias must be [{}], got {:?}",
                dout,
                self.value(b).shape()
            ));
        }
        let rows = self.value(x).len().checked_div(din).unwrap_or(0);
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; rows * dout];
        for r in 0..rows {
            let xrow = &xd[r * din..(r + 1) * din];
            let orow = &mut out[r * dout..(r + 1) * dout];
            for (i, &xv) in xrow.iter().enumerate() {
                let wrow = &wd[i * dout..(i + 1) * dout];
                for (o, &wv) in wrow.iter().enumerate() {
                    orow[o] += xv * wv;
                }
            }
            for (o, &bv) in orow.iter_mut().zip(bd) {
                *o += bv;
            }
        }
        let mut shape = xs;
        *shape.last_mut().unwrap() = dout;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Linear { x, w, b }, &[x, w, b]))
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if axis >= shape.len() {
            return Err(shape_err!("axis {} out of range for {:?}", axis, shape));
        }
        if start + len > shape[axis] {
            return Err(shape_err!(
                "slice [{}, {}) out of range for axis {} of length {}",
                start,
                start + len,
                axis,
                shape[axis]
            ));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner;
            out.extend_from_slice(&xd[base + start * inner..base + (start + len) * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        let value = Tensor::new(new_shape, out)?;
        Ok(self.push(value, Op::Narrow { x, axis, start }, &[x]))
    }

    /// Temporal slice of a `1 x L x C` tensor.
    pub fn crop(&mut self, x: Var, target_len: usize, offset: usize) -> Result<Var> {
        self.value(x).seq_dims()?;
        self.narrow(x, 1, offset, target_len)
    }

    /// Mean over `axis`, which is removed from the shape.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if axis >= shape.len() {
            return Err(shape_err!("axis {} out of range for {:?}", axis, shape));
        }
        if shape[axis] == 0 {
            return Err(shape_err!("mean over empty axis {}", axis));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let xd = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for d in 0..dim {
                let src = &xd[(o * dim + d) * inner..(o * dim + d + 1) * inner];
                for (acc, v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += v;
                }
            }
        }
        for v in &mut out {
            *v /= dim as f64;
        }
        let mut new_shape = shape;
        new_shape.remove(axis);
        let value = Tensor::new(new_shape, out)?;
        Ok(self.push(value, Op::MeanAxis { x, axis }, &[x]))
    }

    /// Mean over time of a `1 x M x C` activation, as a `[C]` vector.
    ///
    /// Computed as `x_0 + mean(x - x_0)`, the same function, so that a
    /// constant channel yields its value exactly.
    pub fn temporal_mean(&mut self, x: Var) -> Result<Var> {
        let (m, c) = self.value(x).seq_dims()?;
        let mu = self.mean_axis(x, 1)?;
        let xd = self.value(x).data();
        let shifted: Vec<f64> = (0..c)
            .map(|ch| {
                let x0 = xd[ch];
                x0 + (0..m).map(|t| xd[t * c + ch] - x0).sum::<f64>() / m as f64
            })
            .collect();
        // [1, C] -> [C]; the mean's gradient only depends on element order
        self.nodes[mu.index()].value = Tensor::vector(shifted);
        Ok(mu)
    }

    /// Per-channel temporal mean and standard deviation of a `1 x M x C`
    /// activation. The deviation is `sqrt(population variance + 1e-5)`.
    pub fn temporal_stats(&mut self, x: Var) -> Result<(Var, Var)> {
        let (m, _) = self.value(x).seq_dims()?;
        if m == 0 {
            return Err(shape_err!("temporal statistics need at least one step"));
        }
        let mu = self.temporal_mean(x)?;
        let (_, c) = self.value(x).seq_dims()?;
        let mu_vals = self.value(mu).data().to_vec();
        let xd = self.value(x).data();
        let mut var = vec![0.0; c];
        for t in 0..m {
            for ch in 0..c {
                let d = xd[t * c + ch] - mu_vals[ch];
                var[ch] += d * d;
            }
        }
        let sigma: Vec<f64> = var.into_iter().map(|v| (v / m as f64 + STATS_EPS).sqrt()).collect();
        let sigma = self.push(Tensor::vector(sigma), Op::TemporalStd { x }, &[x]);
        Ok((mu, sigma))
    }

    /// `a (op) v` with `v` broadcast along the last axis of `a`.
    pub fn channel(&mut self, a: Var, v: Var, op: ChannelOp) -> Result<Var> {
        let c = *self
            .value(a)
            .shape()
            .last()
            .ok_or_else(|| shape_err!("channel op needs rank >= 1"))?;
        if self.value(v).shape() != [c] {
            return Err(shape_err!(
                "channel vector must be [{}], got {:?}",
                c,
                self.value(v).shape()
            ));
        }
        let vd = self.value(v).data();
        let src = self.value(a);
        let data = src
            .data()
            .chunks(c.max(1))
            .flat_map(|row| {
                row.iter().zip(vd).map(move |(&x, &y)| match op {
                    ChannelOp::Add => x + y,
                    ChannelOp::Sub => x - y,
                    ChannelOp::Mul => x * y,
                    ChannelOp::Div => x / y,
                })
            })
            .collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Channel { a, v, op }, &[a, v]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2(self.value(a))?;
        let (k2, n) = dims2(self.value(b))?;
        if k != k2 {
            return Err(shape_err!("matmul inner dims differ: {} vs {}", k, k2));
        }
        let value = Tensor::new(
            vec![m, n],
            matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n),
        )?;
        Ok(self.push(value, Op::MatMul { a, b }, &[a, b]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = dims2(self.value(x))?;
        let value = Tensor::new(vec![c, r], transpose_raw(self.value(x).data(), r, c))?;
        Ok(self.push(value, Op::Transpose { x }, &[x]))
    }

    /// Softmax down each column of a 2-D tensor, max-subtracted.
    pub fn softmax_cols(&mut self, x: Var) -> Result<Var> {
        let (r, c) = dims2(self.value(x))?;
        let xd = self.value(x).data();
        let mut out = vec![0.0; r * c];
        for j in 0..c {
            let max = (0..r).map(|i| xd[i * c + j]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for i in 0..r {
                let e = (xd[i * c + j] - max).exp();
                out[i * c + j] = e;
                total += e;
            }
            for i in 0..r {
                out[i * c + j] /= total;
            }
        }
        let value = Tensor::new(vec![r, c], out)?;
        Ok(self.push(value, Op::SoftmaxCols { x }, &[x]))
    }

    /// Mean over clips of the two-class cross entropy. `logits` is
    /// `1 x C x 2`; `labels[c]` is 0 or 1.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (c, classes) = self.value(logits).seq_dims()?;
        if classes != 2 {
            return Err(shape_err!("expected 2 classes per clip, got {}", classes));
        }
        if labels.len() != c {
            return Err(shape_err!("{} labels for {} clips", labels.len(), c));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Data(format!("label {bad} outside {{0, 1}}")));
        }
        let ld = self.value(logits).data();
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let (a, b) = (ld[2 * i], ld[2 * i + 1]);
                let m = a.max(b);
                let lse = m + ((a - m).exp() + (b - m).exp()).ln();
                lse - ld[2 * i + l]
            })
            .sum();
        let value = Tensor::scalar(total / c as f64);
        Ok(self.push(
            value,
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
            },
            &[logits],
        ))
    }

    /// Squared L2 distance between two equally shaped tensors.
    pub fn sum_sq_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sum_sq_diff")?;
        let total = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok(self.push(Tensor::scalar(total), Op::SumSqDiff { a, b }, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|v| v * k).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Scale { x, k }, &[x])
    }

    /// `sum(weights * x)` against a fixed weight tensor.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor) -> Result<Var> {
        if weights.shape() != self.value(x).shape() {
            return Err(shape_err!(
                "weights {:?} do not match input {:?}",
                weights.shape(),
                self.value(x).shape()
            ));
        }
        let total = self.value(x).dot(&weights);
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum { x, weights }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let w = Tensor::ones(self.value(x).shape());
        self.weighted_sum(x, w).expect("same shape")
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err!(
                "{} operands differ: {:?} vs {:?}",
                what,
                self.value(a).shape(),
                self.value(b).shape()
            ));
        }
        Ok(())
    }
}

pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn dims2(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(shape_err!("expected a matrix, got {:?}", s)),
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            for (o, bv) in orow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose_raw(x: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = x[i * c + j];
        }
    }
    out
}
