//! Analytic gradients against central finite differences in f64
//! (h = 1e-3), for every differentiable operator and a two-stage toy network
//! of each variant.

use ebus3d::nets::{Batch, EncoderSpec, GraphicSignal, ModelConfig, ModelVariant, ResStageSpec, Res3dNet};
use ebus3d::tensor::{
    self, bce_loss, relu_pattern, Array, ConvSpec, Parameters, Reduction, RunningStats, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-3;
const TOL: f64 = 1e-4;
const CASES: u64 = 20;

/// `|a − n| / max(|a|, |n|, 1e-2)`: relative error, degrading to an absolute
/// 1e-6 bound for gradients below 1e-2 where finite differences are noisy.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-2)
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Array<f64> {
    Array::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Inputs bounded away from zero so a ±h step never crosses a ReLU kink.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Array<f64> {
    Array::from_fn(shape, |_| {
        let v: f64 = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) { v } else { -v }
    })
}

/// Reduce any output to a scalar through fixed random weights so every
/// output element contributes a distinct amount.
fn project(y: &Tensor<f64>, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let w = Tensor::constant(random(y.shape(), &mut rng));
    tensor::sum(&tensor::mul(y, &w).unwrap())
}

/// Compare analytic and numeric gradients of `f` with respect to each input.
fn check<F>(name: &str, inputs: Vec<Array<f64>>, seed: u64, f: F) -> f64
where
    F: Fn(&[Tensor<f64>]) -> Tensor<f64>,
{
    let leaves: Vec<Tensor<f64>> = inputs.iter().cloned().map(Tensor::parameter).collect();
    let loss = project(&f(&leaves), seed);
    loss.backward().unwrap();
    let eval = |arrays: &[Array<f64>]| -> f64 {
        let ts: Vec<Tensor<f64>> = arrays.iter().cloned().map(Tensor::constant).collect();
        project(&f(&ts), seed).item().unwrap()
    };
    let mut worst: f64 = 0.0;
    for (i, leaf) in leaves.iter().enumerate() {
        let grad = leaf.grad().unwrap_or_else(|| Array::zeros(leaf.shape()));
        for k in 0..inputs[i].len() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[k] += H;
            let mut minus = inputs.clone();
            minus[i].data_mut()[k] -= H;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let e = rel_err(grad.data()[k], numeric);
            assert!(
                e < TOL,
                "{name} case {seed}: input {i}[{k}] analytic {} numeric {numeric} (rel {e:e})",
                grad.data()[k]
            );
            worst = worst.max(e);
        }
    }
    worst
}

fn cases(name: &str, mut body: impl FnMut(u64, &mut ChaCha8Rng) -> f64) -> String {
    let mut worst: f64 = 0.0;
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        worst = worst.max(body(seed, &mut rng));
    }
    format!("{name}: {CASES} cases, worst relative error {worst:.2e}")
}

/// Every differentiable operator, `CASES` random cases each.
pub fn operators() -> Vec<String> {
    let mut out = vec![
        cases("relu", |s, r| check("relu", vec![away_from_zero(&[3, 4], r)], s, |t| tensor::relu(&t[0]))),
        cases("sigmoid", |s, r| check("sigmoid", vec![random(&[3, 4], r)], s, |t| tensor::sigmoid(&t[0]))),
        cases("add", |s, r| {
            check("add", vec![random(&[2, 5], r), random(&[2, 5], r)], s, |t| tensor::add(&t[0], &t[1]).unwrap())
        }),
        cases("mul", |s, r| {
            check("mul", vec![random(&[2, 5], r), random(&[2, 5], r)], s, |t| tensor::mul(&t[0], &t[1]).unwrap())
        }),
        cases("scale", |s, r| check("scale", vec![random(&[7], r)], s, |t| tensor::scale(&t[0], -1.7))),
        cases("sum", |s, r| check("sum", vec![random(&[2, 3], r)], s, |t| tensor::sum(&t[0]))),
        cases("mean", |s, r| check("mean", vec![random(&[2, 3], r)], s, |t| tensor::mean(&t[0]))),
        cases("reshape", |s, r| {
            check("reshape", vec![random(&[2, 6], r)], s, |t| tensor::reshape(&t[0], &[3, 4]).unwrap())
        }),
        cases("global_avg_pool", |s, r| {
            check("gap", vec![random(&[2, 3, 2, 3, 2], r)], s, |t| tensor::global_avg_pool(&t[0]).unwrap())
        }),
        cases("linear", |s, r| {
            check("linear", vec![random(&[3, 4], r), random(&[5, 4], r), random(&[5], r)], s, |t| {
                tensor::linear(&t[0], &t[1], &t[2]).unwrap()
            })
        }),
        cases("batch_norm", |s, r| {
            let inputs = vec![random(&[3, 2, 2, 3], r), random(&[2], r), random(&[2], r)];
            check("batch_norm", inputs, s, |t| {
                let mut stats = RunningStats::new(2);
                tensor::batch_norm(&t[0], &t[1], &t[2], &mut stats, true).unwrap()
            })
        }),
    ];
    for red in [Reduction::Sum, Reduction::Mean] {
        out.push(cases(&format!("bce {red:?}"), |s, r| {
            let p = Array::from_fn(&[4, 1], |_| r.random_range(0.1..0.9));
            let labels: Vec<f64> = (0..4).map(|_| r.random_range(0..2) as f64).collect();
            check("bce", vec![p], s, move |t| bce_loss(&t[0], &labels, red).unwrap())
        }));
    }
    for (stride, pad) in [(1, 1), (2, 0), (2, 1)] {
        out.push(cases(&format!("conv3d s{stride} p{pad}"), |s, r| {
            let spec = ConvSpec::<3>::uniform(2, 3, 3, stride, pad);
            let inputs = vec![random(&[2, 2, 3, 4, 4], r), random(&spec.weight_shape(), r), random(&[3], r)];
            check("conv3d", inputs, s, |t| tensor::conv3d(&t[0], &t[1], &t[2], &spec).unwrap())
        }));
        out.push(cases(&format!("conv2d s{stride} p{pad}"), |s, r| {
            let spec = ConvSpec::<2>::uniform(3, 10, 3, stride, pad);
            let inputs = vec![random(&[2, 3, 5, 4], r), random(&spec.weight_shape(), r), random(&[10], r)];
            check("conv2d", inputs, s, |t| tensor::conv2d(&t[0], &t[1], &t[2], &spec).unwrap())
        }));
    }
    out
}

fn toy_config(variant: ModelVariant) -> ModelConfig {
    ModelConfig {
        variant,
        encoder: EncoderSpec {
            in_channels: 3,
            stem_channels: 4,
            stem_kernel: 3,
            stages: vec![ResStageSpec::new(4, 4), ResStageSpec::new(4, 6)],
        },
        fusion_dim: 4,
    }
}

fn toy_batch(variant: ModelVariant, rng: &mut ChaCha8Rng) -> (Batch<f64>, Vec<f64>) {
    let n = 2;
    let mut batch = Batch::new(random(&[n, 3, 3, 8, 8], rng));
    if variant.uses_signal() {
        batch = batch.with_signals(vec![GraphicSignal::grayscale(true), GraphicSignal::doppler(false)]);
    }
    if variant.uses_elastography() {
        batch = batch.with_elasto(random(&[n, 3, 8, 8], rng));
    }
    (batch, vec![1.0, 0.0])
}

fn net_loss(model: &Res3dNet<f64>, batch: &Batch<f64>, labels: &[f64]) -> Tensor<f64> {
    bce_loss(&model.forward(batch, true).unwrap(), labels, Reduction::Sum).unwrap()
}

/// Perturb parameter element `k` of the `which`-th parameter by `delta`.
fn nudge(model: &mut Res3dNet<f64>, which: usize, k: usize, delta: f64) {
    let mut i = 0;
    model.visit_params_mut(&mut |_, p| {
        if i == which {
            let mut v = p.value().clone();
            v.data_mut()[k] += delta;
            *p = Tensor::parameter(v);
        }
        i += 1;
    });
}

/// Random coordinates of every parameter tensor of a two-stage network.
pub fn toy_networks() -> Vec<String> {
    let mut out = Vec::new();
    for variant in ModelVariant::ALL {
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        let mut kinks = 0;
        for seed in 0..CASES {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let model = Res3dNet::<f64>::new(toy_config(variant), seed).unwrap();
            let (batch, labels) = toy_batch(variant, &mut rng);
            net_loss(&model, &batch, &labels).backward().unwrap();
            let mut grads = Vec::new();
            model.visit_params(&mut |name, p| grads.push((name.to_string(), p.grad().unwrap())));
            // a handful of random coordinates from every parameter tensor
            for (which, (name, g)) in grads.iter().enumerate() {
                let (mut taken, mut draws) = (0, 0);
                while taken < 3 && draws < 30 {
                    draws += 1;
                    let k = rng.random_range(0..g.len());
                    let mut m = Res3dNet::<f64>::new(toy_config(variant), seed).unwrap();
                    nudge(&mut m, which, k, H);
                    let (plus, hp) = relu_pattern(|| net_loss(&m, &batch, &labels).item().unwrap());
                    nudge(&mut m, which, k, -2.0 * H);
                    let (minus, hm) = relu_pattern(|| net_loss(&m, &batch, &labels).item().unwrap());
                    if hp != hm {
                        // the ±h window straddles a ReLU kink: not differentiable there
                        kinks += 1;
                        continue;
                    }
                    taken += 1;
                    let numeric = (plus - minus) / (2.0 * H);
                    let e = rel_err(g.data()[k], numeric);
                    assert!(
                        e < TOL,
                        "{variant} case {seed}: {name}[{k}] analytic {} numeric {numeric} (rel {e:e})",
                        g.data()[k]
                    );
                    worst = worst.max(e);
                    checked += 1;
                }
            }
        }
        out.push(format!("{variant} toy network: {CASES} cases, {checked} coordinates, worst relative error {worst:.2e} ({kinks} kink-crossing draws redrawn)"));
    }
    out
}
