use super::ops::{dims2, matmul_raw, split_axis, transpose_raw, ChannelOp};
use super::{Node, Op, Tape, Var};
use crate::tensor::Tensor;

fn like(t: &Tensor, data: Vec<f64>) -> Tensor {
    Tensor::new(t.shape().to_vec(), data).expect("gradient shape matches value")
}

/// Gradient contributions of `node` to each of its inputs, given the
/// gradient `g` flowing into the node's output.
pub(super) fn contributions(tape: &Tape, node: &Node, g: &Tensor) -> Vec<(Var, Tensor)> {
    let val = |v: Var| tape.value(v);
    let needs = |v: Var| tape.requires_grad(v);
    let gd = g.data();
    let mut out = Vec::new();
    match &node.op {
        Op::Leaf => {}
        Op::Conv1d {
            x,
            w,
            b,
            stride,
            padding,
        } => {
            let xv = val(*x);
            let wv = val(*w);
            let (len, cin) = xv.seq_dims().expect("checked in forward");
            let k = wv.shape()[0];
            let cout = wv.shape()[2];
            let out_len = node.value.shape()[1];
            let (xd, wd) = (xv.data(), wv.data());
            let mut gx = vec![0.0; xd.len()];
            let mut gw = vec![0.0; wd.len()];
            let mut gb = vec![0.0; cout];
            for t in 0..out_len {
                let grow = &gd[t * cout..(t + 1) * cout];
                for (o, gv) in grow.iter().enumerate() {
                    gb[o] += gv;
                }
                for j in 0..k {
                    let pos = (t * stride + j) as isize - *padding as isize;
                    if pos < 0 || pos as usize >= len {
                        continue;
                    }
                    let pos = pos as usize;
                    for i in 0..cin {
                        let base = (j * cin + i) * cout;
                        let xval = xd[pos * cin + i];
                        let mut acc = 0.0;
                        for o in 0..cout {
                            acc += wd[base + o] * grow[o];
                            gw[base + o] += xval * grow[o];
                        }
                        gx[pos * cin + i] += acc;
                    }
                }
            }
            out.push((*x, like(xv, gx)));
            out.push((*w, like(wv, gw)));
            out.push((*b, Tensor::vector(gb)));
        }
        Op::ConvTranspose1d { x, w, b, stride } => {
            let xv = val(*x);
            let wv = val(*w);
            let (len, cin) = xv.seq_dims().expect("checked in forward");
            let k = wv.shape()[0];
            let cout = wv.shape()[1];
            let (xd, wd) = (xv.data(), wv.data());
            let mut gx = vec![0.0; xd.len()];
            let mut gw = vec![0.0; wd.len()];
            let mut gb = vec![0.0; cout];
            for row in gd.chunks(cout) {
                for (o, gv) in row.iter().enumerate() {
                    gb[o] += gv;
                }
            }
            for t in 0..len {
                for j in 0..k {
                    let grow = &gd[(t * stride + j) * cout..(t * stride + j + 1) * cout];
                    for (o, &gv) in grow.iter().enumerate() {
                        let base = (j * cout + o) * cin;
                        for i in 0..cin {
                            gx[t * cin + i] += wd[base + i] * gv;
                            gw[base + i] += xd[t * cin + i] * gv;
                        }
                    }
                }
            }
            out.push((*x, like(xv, gx)));
            out.push((*w, like(wv, gw)));
            out.push((*b, Tensor::vector(gb)));
        }
        Op::MaxPool1d { x, argmax } => {
            let xv = val(*x);
            let mut gx = vec![0.0; xv.len()];
            for (&src, gv) in argmax.iter().zip(gd) {
                gx[src] += gv;
            }
            out.push((*x, like(xv, gx)));
        }
        Op::Relu { x } => {
            let xv = val(*x);
            let gx = xv
                .data()
                .iter()
                .zip(gd)
                .map(|(v, gv)| if *v > 0.0 { *gv } else { 0.0 })
                .collect();
            out.push((*x, like(xv, gx)));
        }
        Op::Dropout { x, mask } => {
            let gx = gd.iter().zip(mask).map(|(gv, m)| gv * m).collect();
            out.push((*x, like(val(*x), gx)));
        }
        Op::Linear { x, w, b } => {
            let xv = val(*x);
            let wv = val(*w);
            let (din, dout) = (wv.shape()[0], wv.shape()[1]);
            let rows = xv.len().checked_div(din).unwrap_or(0);
            let (xd, wd) = (xv.data(), wv.data());
            if needs(*x) {
                let mut gx = vec![0.0; xd.len()];
                for r in 0..rows {
                    for i in 0..din {
                        gx[r * din + i] = wd[i * dout..(i + 1) * dout]
                            .iter()
                            .zip(&gd[r * dout..(r + 1) * dout])
                            .map(|(a, b)| a * b)
                            .sum();
                    }
                }
                out.push((*x, like(xv, gx)));
            }
            let mut gw = vec![0.0; wd.len()];
            let mut gb = vec![0.0; dout];
            for r in 0..rows {
                let grow = &gd[r * dout..(r + 1) * dout];
                for i in 0..din {
                    let xval = xd[r * din + i];
                    for (acc, gv) in gw[i * dout..(i + 1) * dout].iter_mut().zip(grow) {
                        *acc += xval * gv;
                    }
                }
                for (acc, gv) in gb.iter_mut().zip(grow) {
                    *acc += gv;
                }
            }
            out.push((*w, like(wv, gw)));
            out.push((*b, Tensor::vector(gb)));
        }
        Op::Narrow { x, axis, start } => {
            let xv = val(*x);
            let (outer, dim, inner) = split_axis(xv.shape(), *axis);
            let len = node.value.shape()[*axis];
            let mut gx = vec![0.0; xv.len()];
            for o in 0..outer {
                let dst = o * dim * inner + start * inner;
                gx[dst..dst + len * inner].copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
            }
            out.push((*x, like(xv, gx)));
        }
        Op::MeanAxis { x, axis } => {
            let xv = val(*x);
            let (outer, dim, inner) = split_axis(xv.shape(), *axis);
            let mut gx = vec![0.0; xv.len()];
            for o in 0..outer {
                for d in 0..dim {
                    for i in 0..inner {
                        gx[(o * dim + d) * inner + i] = gd[o * inner + i] / dim as f64;
                    }
                }
            }
            out.push((*x, like(xv, gx)));
        }
        Op::TemporalStd { x } => {
            let xv = val(*x);
            let (m, c) = xv.seq_dims().expect("checked in forward");
            let xd = xv.data();
            let sigma = node.value.data();
            let mut mu = vec![0.0; c];
            for t in 0..m {
                for ch in 0..c {
                    mu[ch] += xd[t * c + ch];
                }
            }
            for v in &mut mu {
                *v /= m as f64;
            }
            let mut gx = vec![0.0; xd.len()];
            for t in 0..m {
                for ch in 0..c {
                    gx[t * c + ch] = gd[ch] * (xd[t * c + ch] - mu[ch]) / (m as f64 * sigma[ch]);
                }
            }
            out.push((*x, like(xv, gx)));
        }
        Op::Channel { a, v, op } => {
            let av = val(*a);
            let vv = val(*v);
            let c = vv.len();
            let (ad, vd) = (av.data(), vv.data());
            let mut ga = vec![0.0; ad.len()];
            let mut gvv = vec![0.0; c];
            for (idx, gv) in gd.iter().enumerate() {
                let ch = idx % c;
                let (x, y) = (ad[idx], vd[ch]);
                let (da, dv) = match op {
                    ChannelOp::Add => (*gv, *gv),
                    ChannelOp::Sub => (*gv, -gv),
                    ChannelOp::Mul => (gv * y, gv * x),
                    ChannelOp::Div => (gv / y, -gv * x / (y * y)),
                };
                ga[idx] = da;
                gvv[ch] += dv;
            }
            out.push((*a, like(av, ga)));
            out.push((*v, Tensor::vector(gvv)));
        }
        Op::MatMul { a, b } => {
            let av = val(*a);
            let bv = val(*b);
            let (m, k) = dims2(av).expect("checked in forward");
            let n = bv.shape()[1];
            if needs(*a) {
                let bt = transpose_raw(bv.data(), k, n);
                out.push((*a, like(av, matmul_raw(gd, &bt, m, n, k))));
            }
            if needs(*b) {
                let at = transpose_raw(av.data(), m, k);
                out.push((*b, like(bv, matmul_raw(&at, gd, k, m, n))));
            }
        }
        Op::Transpose { x } => {
            let xv = val(*x);
            let (r, c) = dims2(xv).expect("checked in forward");
            out.push((*x, like(xv, transpose_raw(gd, c, r))));
        }
        Op::SoftmaxCols { x } => {
            let y = &node.value;
            let (r, c) = dims2(y).expect("checked in forward");
            let yd = y.data();
            let mut gx = vec![0.0; yd.len()];
            for j in 0..c {
                let dot: f64 = (0..r).map(|i| yd[i * c + j] * gd[i * c + j]).sum();
                for i in 0..r {
                    gx[i * c + j] = yd[i * c + j] * (gd[i * c + j] - dot);
                }
            }
            out.push((*x, like(val(*x), gx)));
        }
        Op::SoftmaxXent { logits, labels } => {
            let lv = val(*logits);
            let ld = lv.data();
            let c = labels.len() as f64;
            let scale = gd[0] / c;
            let mut gx = vec![0.0; ld.len()];
            for (i, &l) in labels.iter().enumerate() {
                let (a, b) = (ld[2 * i], ld[2 * i + 1]);
                let m = a.max(b);
                let (ea, eb) = ((a - m).exp(), (b - m).exp());
                let p = [ea / (ea + eb), eb / (ea + eb)];
                for k in 0..2 {
                    let onehot = if k == l { 1.0 } else { 0.0 };
                    gx[2 * i + k] = (p[k] - onehot) * scale;
                }
            }
            out.push((*logits, like(lv, gx)));
        }
        Op::SumSqDiff { a, b } => {
            let av = val(*a);
            let bv = val(*b);
            let diff: Vec<f64> = av
                .data()
                .iter()
                .zip(bv.data())
                .map(|(x, y)| 2.0 * (x - y) * gd[0])
                .collect();
            let neg = diff.iter().map(|d| -d).collect();
            out.push((*a, like(av, diff)));
            out.push((*b, like(bv, neg)));
        }
        Op::Add { a, b } => {
            out.push((*a, g.clone()));
            out.push((*b, g.clone()));
        }
        Op::Scale { x, k } => {
            out.push((*x, like(val(*x), gd.iter().map(|v| v * k).collect())));
        }
        Op::WeightedSum { x, weights } => {
            let gx = weights.data().iter().map(|w| w * gd[0]).collect();
            out.push((*x, like(val(*x), gx)));
        }
    }
    out
}
