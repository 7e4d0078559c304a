#![allow(dead_code)]

use dvtg_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
    }
}

/// Direct nested-loop convolution with zero padding.
pub fn conv_oracle(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
    let (l, cin) = (x.shape()[1], x.shape()[2]);
    let (k, cout) = (w.shape()[0], w.shape()[2]);
    let lout = (l + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; lout * cout];
    for t in 0..lout {
        for o in 0..cout {
            let mut acc = b.data()[o];
            for j in 0..k {
                let pos = (t * stride + j) as isize - pad as isize;
                if pos < 0 || pos >= l as isize {
                    continue;
                }
                for i in 0..cin {
                    acc += x.data()[pos as usize * cin + i] * w.data()[(j * cin + i) * cout + o];
                }
            }
            out[t * cout + o] = acc;
        }
    }
    out
}

/// Each input step scatters `k` weighted copies into the output.
pub fn scatter_oracle(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize) -> Vec<f64> {
    let (l, cin) = (x.shape()[1], x.shape()[2]);
    let (k, cout) = (w.shape()[0], w.shape()[1]);
    let lout = (l - 1) * stride + k;
    let mut out: Vec<f64> = (0..lout).flat_map(|_| b.data().to_vec()).collect();
    for t in 0..l {
        for j in 0..k {
            for o in 0..cout {
                for i in 0..cin {
                    out[(t * stride + j) * cout + o] += x.data()[t * cin + i] * w.data()[(j * cout + o) * cin + i];
                }
            }
        }
    }
    out
}
