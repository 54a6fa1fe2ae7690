//! Cosine-annealed SGD with gradient accumulation, fitting y = 2x − 1.

use ebus3d::tensor::{add, linear, mean, mul, scale, Array, CosineSchedule, Parameters, Sgd, SgdConfig, Tensor};

struct Line {
    w: Tensor<f64>,
    b: Tensor<f64>,
}

impl Parameters<f64> for Line {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor<f64>)) {
        f("w", &self.w);
        f("b", &self.b);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<f64>)) {
        f("w", &mut self.w);
        f("b", &mut self.b);
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sched = CosineSchedule::new(1e-4, 16)?;
    let lrs: Vec<String> = (0..=16).step_by(4).map(|t| format!("{:.3e}", sched.lr_at(t))).collect();
    println!("lr at t = 0,4,..,16: {lrs:?}");

    let xs: Vec<f64> = (0..12).map(|i| i as f64 / 6.0 - 1.0).collect();
    let epochs = 60;
    let mut model = Line { w: Tensor::parameter(Array::zeros(&[1, 1])), b: Tensor::parameter(Array::zeros(&[1])) };
    // Four samples per update, three updates per epoch.
    let mut opt = Sgd::new(SgdConfig { accumulation: 4, momentum: 0.9, ..SgdConfig::new(0.1, epochs * 3)? })?;
    for epoch in 0..epochs {
        for &x in &xs {
            let input = Tensor::constant(Array::full(&[1, 1], x));
            let err = add(&linear(&input, &model.w, &model.b)?, &Tensor::constant(Array::full(&[1, 1], 1.0 - 2.0 * x)))?;
            mean(&scale(&mul(&err, &err)?, 1.0)).backward()?;
            if opt.accumulate(1) {
                let r = opt.step(&mut model)?;
                if epoch % 20 == 0 && r.step % 3 == 0 {
                    println!("step {:>3} lr {:.4} over {} samples", r.step, r.lr, r.samples);
                }
            }
        }
    }
    println!("fitted w = {:.4}, b = {:.4}", model.w.value().data()[0], model.b.value().data()[0]);
    Ok(())
}
