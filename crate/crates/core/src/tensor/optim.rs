//! Stochastic gradient descent with gradient accumulation and a half-cosine
//! learning-rate decay.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

use super::{Array, Element, Parameters};

pub const DEFAULT_LR: f64 = 1e-4;
pub const DEFAULT_ACCUMULATION: usize = 12;

/// `lr(t) = lr0 · ½ · (1 + cos(π t / T))`, clamped to zero past `T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineSchedule {
    lr0: f64,
    total_steps: u64,
    step: u64,
}

impl CosineSchedule {
    pub fn new(lr0: f64, total_steps: u64) -> Result<Self> {
        if total_steps == 0 {
            return Err(Error::invalid("cosine schedule needs at least one step"));
        }
        if !(lr0.is_finite() && lr0 >= 0.0) {
            return Err(Error::invalid(format!("learning rate {lr0} is not valid")));
        }
        Ok(CosineSchedule {
            lr0,
            total_steps,
            step: 0,
        })
    }

    /// Resume at a given step.
    pub fn at_step(mut self, step: u64) -> Self {
        self.step = step;
        self
    }

    pub fn lr_at(&self, t: u64) -> f64 {
        let t = t.min(self.total_steps) as f64;
        self.lr0 * 0.5 * (1.0 + (PI * t / self.total_steps as f64).cos())
    }

    pub fn lr(&self) -> f64 {
        self.lr_at(self.step)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn initial_lr(&self) -> f64 {
        self.lr0
    }

    fn advance(&mut self) {
        self.step += 1;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgdConfig {
    pub schedule: CosineSchedule,
    /// Samples whose gradients are averaged into one update.
    pub accumulation: usize,
    /// Heavy-ball momentum; zero gives plain SGD.
    pub momentum: f64,
}

impl SgdConfig {
    pub fn new(lr0: f64, total_steps: u64) -> Result<Self> {
        Ok(SgdConfig {
            schedule: CosineSchedule::new(lr0, total_steps)?,
            accumulation: DEFAULT_ACCUMULATION,
            momentum: 0.0,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// Index of the step just taken (0-based).
    pub step: u64,
    pub lr: f64,
    pub samples: usize,
}

pub struct Sgd<T: Element> {
    config: SgdConfig,
    pending: usize,
    velocity: HashMap<String, Array<T>>,
}

impl<T: Element> Sgd<T> {
    pub fn new(config: SgdConfig) -> Result<Self> {
        if config.accumulation == 0 {
            return Err(Error::invalid("accumulation must be at least one sample"));
        }
        if !(0.0..1.0).contains(&config.momentum) {
            return Err(Error::invalid(format!(
                "momentum {} outside [0, 1)",
                config.momentum
            )));
        }
        Ok(Sgd {
            config,
            pending: 0,
            velocity: HashMap::new(),
        })
    }

    pub fn schedule(&self) -> &CosineSchedule {
        &self.config.schedule
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    pub fn pending_samples(&self) -> usize {
        self.pending
    }

    /// Record that gradients for `samples` more samples were accumulated.
    /// Returns true once a full accumulation window is pending.
    pub fn accumulate(&mut self, samples: usize) -> bool {
        self.pending += samples;
        self.is_full()
    }

    pub fn is_full(&self) -> bool {
        self.pending >= self.config.accumulation
    }

    /// `p ← p − lr(t) · mean_grad`, then reset gradients and advance `t`.
    ///
    /// The mean divides accumulated gradient sums by the pending sample
    /// count, so a short final window still takes an averaged step.
    pub fn step(&mut self, model: &mut impl Parameters<T>) -> Result<StepReport> {
        if self.pending == 0 {
            return Err(Error::EmptyGradients);
        }
        let mut any = false;
        model.visit_params(&mut |_, p| any |= p.grad().is_some());
        if !any {
            return Err(Error::EmptyGradients);
        }
        let lr = T::lit(self.config.schedule.lr());
        let inv = T::one() / T::from_usize(self.pending).expect("count");
        let mom = T::lit(self.config.momentum);
        let use_momentum = self.config.momentum > 0.0;
        let velocity = &mut self.velocity;
        let mut failure = None;
        model.visit_params_mut(&mut |name, param| {
            if failure.is_some() {
                return;
            }
            let Some(grad) = param.grad() else { return };
            let mut direction = grad.scale(inv);
            if use_momentum {
                let v = velocity
                    .entry(name.to_string())
                    .or_insert_with(|| Array::zeros(direction.shape()));
                *v = v.scale(mom);
                if let Err(e) = v.add_assign(&direction) {
                    failure = Some(e);
                    return;
                }
                direction = v.clone();
            }
            match param.value().zip_map(&direction, |p, d| p - lr * d) {
                Ok(updated) => *param = super::Tensor::parameter(updated),
                Err(e) => failure = Some(e),
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        let report = StepReport {
            step: self.config.schedule.step(),
            lr: self.config.schedule.lr(),
            samples: self.pending,
        };
        self.pending = 0;
        self.config.schedule.advance();
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    struct One(Tensor<f64>);

    impl Parameters<f64> for One {
        fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor<f64>)) {
            f("p", &self.0)
        }
        fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<f64>)) {
            f("p", &mut self.0)
        }
    }

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let s = CosineSchedule::new(1e-4, 10).unwrap();
        assert_eq!(s.lr_at(0), 1e-4);
        assert!(s.lr_at(10).abs() < 1e-20);
        assert!((s.lr_at(5) - 5e-5).abs() < 1e-18);
        for t in 0..10 {
            assert!(s.lr_at(t + 1) <= s.lr_at(t));
        }
        assert!(CosineSchedule::new(1e-4, 0).is_err());
    }

    #[test]
    fn single_update_matches_hand_value() {
        let mut m = One(Tensor::parameter(Array::scalar(1.0)));
        let mut sgd = Sgd::new(SgdConfig {
            accumulation: 1,
            ..SgdConfig::new(1e-4, 4).unwrap()
        })
        .unwrap();
        crate::tensor::ops::sum(&m.0).backward().unwrap();
        assert!(sgd.accumulate(1));
        let r = sgd.step(&mut m).unwrap();
        assert_eq!(r.step, 0);
        assert!((m.0.value().data()[0] - 0.9999).abs() < 1e-15);
        assert!(m.0.grad().is_none());
        assert_eq!(sgd.schedule().step(), 1);
    }

    #[test]
    fn twenty_four_samples_give_two_steps() {
        let mut m = One(Tensor::parameter(Array::scalar(0.0)));
        let mut sgd = Sgd::new(SgdConfig::new(1e-2, 2).unwrap()).unwrap();
        let mut steps = 0;
        for _ in 0..24 {
            crate::tensor::ops::sum(&m.0).backward().unwrap();
            if sgd.accumulate(1) {
                let r = sgd.step(&mut m).unwrap();
                assert_eq!(r.samples, 12);
                steps += 1;
            }
        }
        assert_eq!(steps, 2);
        // each step moves by lr(t)·mean_grad with mean_grad = 1
        let expected = -(1e-2 + 1e-2 * 0.5 * (1.0 + (PI / 2.0).cos()));
        assert!((m.0.value().data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn empty_step_is_an_error() {
        let mut m = One(Tensor::parameter(Array::scalar(0.0)));
        let mut sgd = Sgd::new(SgdConfig::new(1e-2, 2).unwrap()).unwrap();
        assert!(matches!(sgd.step(&mut m), Err(Error::EmptyGradients)));
        sgd.accumulate(3);
        assert!(matches!(sgd.step(&mut m), Err(Error::EmptyGradients)));
    }
}
