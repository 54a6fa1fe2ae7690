//! The reverse-mode engine on a two-layer perceptron: gradients from
//! `backward` next to central differences.

use ebus3d::tensor::{bce_loss, linear, relu, sigmoid, Array, Reduction, Tensor};

fn loss(x: &Tensor<f64>, w1: &Tensor<f64>, b1: &Tensor<f64>, w2: &Tensor<f64>, b2: &Tensor<f64>) -> Tensor<f64> {
    let h = relu(&linear(x, w1, b1).unwrap());
    let p = sigmoid(&linear(&h, w2, b2).unwrap());
    bce_loss(&p, &[1.0, 0.0, 1.0], Reduction::Mean).unwrap()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = Tensor::constant(Array::from_fn(&[3, 4], |i| (1.3 * i as f64 + 0.4).sin()));
    let w1 = Tensor::parameter(Array::from_fn(&[5, 4], |i| 0.6 * (0.7 * i as f64 - 1.1).cos()));
    let b1 = Tensor::parameter(Array::full(&[5], 0.1));
    let w2 = Tensor::parameter(Array::from_fn(&[1, 5], |i| 0.3 - 0.2 * i as f64));
    let b2 = Tensor::parameter(Array::zeros(&[1]));

    let l = loss(&x, &w1, &b1, &w2, &b2);
    l.backward()?;
    println!("loss {:.6}", l.item()?);

    let g = w1.grad().expect("w1 takes part in the loss");
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..w1.value().len() {
        let nudged = |d: f64| {
            let mut v = w1.value().clone();
            v.data_mut()[i] += d;
            loss(&x, &Tensor::parameter(v), &b1, &w2, &b2).item().unwrap()
        };
        let numeric = (nudged(h) - nudged(-h)) / (2.0 * h);
        worst = worst.max((numeric - g.data()[i]).abs());
    }
    println!("dL/dW1 {:?}", g.data().iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>());
    println!("max |analytic - numeric| over W1: {worst:.2e}");
    Ok(())
}
