//! Convolutions against a direct nested-loop oracle on random tensors, for
//! every stride in {1, 2} and padding in {0, 1, 2}.

use ebus3d::tensor::{conv2d, conv3d, Array, ConvSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `x: N×C×T×H×W`, `w: O×C×kT×kH×kW`, uniform stride; spatial padding
/// `pad`, temporal padding `tpad`.
fn oracle3d(x: &Array<f64>, w: &Array<f64>, b: &[f64], stride: usize, pad: usize, tpad: usize) -> Array<f64> {
    let [n, c, t, h, wd] = x.shape().try_into().unwrap();
    let [o, _, kt, kh, kw] = w.shape().try_into().unwrap();
    let out = |len: usize, k: usize, pad: usize| (len + 2 * pad - k) / stride + 1;
    let (ot, oh, ow) = (out(t, kt, tpad), out(h, kh, pad), out(wd, kw, pad));
    let xi = |ni, ci, ti, hi, wi| x.data()[(((ni * c + ci) * t + ti) * h + hi) * wd + wi];
    let wi = |oi, ci, a, bb, cc| w.data()[(((oi * c + ci) * kt + a) * kh + bb) * kw + cc];
    let mut y = vec![0.0; n * o * ot * oh * ow];
    for ni in 0..n {
        for oi in 0..o {
            for p in 0..ot {
                for q in 0..oh {
                    for r in 0..ow {
                        let mut acc = b[oi];
                        for ci in 0..c {
                            for a in 0..kt {
                                for bb in 0..kh {
                                    for cc in 0..kw {
                                        let ti = (p * stride + a) as isize - tpad as isize;
                                        let hi = (q * stride + bb) as isize - pad as isize;
                                        let wj = (r * stride + cc) as isize - pad as isize;
                                        if ti < 0 || hi < 0 || wj < 0 || ti >= t as isize || hi >= h as isize || wj >= wd as isize {
                                            continue;
                                        }
                                        acc += xi(ni, ci, ti as usize, hi as usize, wj as usize) * wi(oi, ci, a, bb, cc);
                                    }
                                }
                            }
                        }
                        y[(((ni * o + oi) * ot + p) * oh + q) * ow + r] = acc;
                    }
                }
            }
        }
    }
    Array::new(vec![n, o, ot, oh, ow], y).unwrap()
}

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Array<f64> {
    Array::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn max_diff(a: &Array<f32>, b: &Array<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(&x, &y)| (x as f64 - y).abs()).fold(0.0, f64::max)
}

pub fn run3d(x: &Array<f64>, w: &Array<f64>, b: &[f64], stride: usize, pad: usize) -> f64 {
    let [o, c, k, _, _] = w.shape().try_into().unwrap();
    let spec = ConvSpec::<3>::uniform(c, o, k, stride, pad);
    let got = conv3d(
        &Tensor::constant(x.cast::<f32>()),
        &Tensor::constant(w.cast::<f32>()),
        &Tensor::constant(Array::new(vec![o], b.to_vec()).unwrap().cast::<f32>()),
        &spec,
    )
    .unwrap();
    max_diff(got.value(), &oracle3d(x, w, b, stride, pad, pad))
}

fn run2d(x: &Array<f64>, w: &Array<f64>, b: &[f64], stride: usize, pad: usize) -> f64 {
    let [n, c, h, wd] = x.shape().try_into().unwrap();
    let [o, _, k, _] = w.shape().try_into().unwrap();
    let spec = ConvSpec::<2>::uniform(c, o, k, stride, pad);
    let got = conv2d(
        &Tensor::constant(x.cast::<f32>()),
        &Tensor::constant(w.cast::<f32>()),
        &Tensor::constant(Array::new(vec![o], b.to_vec()).unwrap().cast::<f32>()),
        &spec,
    )
    .unwrap();
    // the 2D oracle is the 3D one over a unit time axis
    let x3 = x.clone().reshape(&[n, c, 1, h, wd]).unwrap();
    let w3 = w.clone().reshape(&[o, c, 1, k, k]).unwrap();
    let want = oracle3d(&x3, &w3, b, stride, pad, 0);
    let s = want.shape().to_vec();
    max_diff(got.value(), &want.reshape(&[s[0], s[1], s[3], s[4]]).unwrap())
}

/// Every stride × padding combination over several kernel sizes, channel
/// counts and shapes up to 2×3×5×6×7, for both ranks. Returns the max abs diff.
pub fn sweep() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    let mut combos = 0;
    for stride in [1, 2] {
        for pad in [0, 1, 2] {
            // out-channel counts on both sides of the direct/GEMM switch
            for (k, o) in [(1, 4), (3, 5), (3, 12), (2, 9)] {
                for shape in [[1, 1, 3, 3, 3], [2, 3, 5, 6, 7], [2, 2, 4, 5, 3]] {
                    if shape[2..].iter().any(|&d| d + 2 * pad < k) {
                        continue;
                    }
                    let x = random(&shape, &mut rng);
                    let w = random(&[o, shape[1], k, k, k], &mut rng);
                    let b: Vec<f64> = (0..o).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let d3 = run3d(&x, &w, &b, stride, pad);
                    let x2 = random(&[shape[0], shape[1], shape[3], shape[4]], &mut rng);
                    let w2 = random(&[o, shape[1], k, k], &mut rng);
                    let d2 = run2d(&x2, &w2, &b, stride, pad);
                    assert!(d3 < 1e-5, "conv3d stride {stride} pad {pad} k {k} out {o} {shape:?}: {d3:e}");
                    assert!(d2 < 1e-5, "conv2d stride {stride} pad {pad} k {k} out {o} {shape:?}: {d2:e}");
                    worst = worst.max(d3).max(d2);
                    combos += 1;
                }
            }
        }
    }
    format!("{combos} configurations per rank, max abs diff {worst:.2e}")
}

