use std::sync::Mutex;

use rand::Rng;

use crate::error::Result;
use crate::tensor::{self, init, Array, ConvSpec, Element, RunningStats, Tensor};

/// A named slot reachable from a model: a trainable leaf or a persistent
/// buffer such as running statistics.
pub enum Entry<'a, T: Element> {
    Param(&'a Tensor<T>),
    Buffer(&'a Array<T>),
}

pub enum EntryMut<'a, T: Element> {
    Param(&'a mut Tensor<T>),
    Buffer(&'a mut Array<T>),
}

pub(crate) type Visit<'f, T> = dyn FnMut(&str, Entry<'_, T>) + 'f;
pub(crate) type VisitMut<'f, T> = dyn FnMut(&str, EntryMut<'_, T>) + 'f;

pub struct Conv<T: Element, const D: usize> {
    pub spec: ConvSpec<D>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Element, const D: usize> Conv<T, D> {
    pub fn new(spec: ConvSpec<D>, rng: &mut impl Rng) -> Self {
        let weight = init::fan_in_normal(&spec.weight_shape(), spec.fan_in(), rng);
        Conv {
            spec,
            weight: Tensor::parameter(weight),
            bias: Tensor::parameter(Array::zeros(&[spec.out_channels])),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        tensor::conv::conv_nd(x, &self.weight, &self.bias, &self.spec)
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        f(&format!("{prefix}.weight"), Entry::Param(&self.weight));
        f(&format!("{prefix}.bias"), Entry::Param(&self.bias));
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        f(&format!("{prefix}.weight"), EntryMut::Param(&mut self.weight));
        f(&format!("{prefix}.bias"), EntryMut::Param(&mut self.bias));
    }
}

pub struct BatchNorm<T: Element> {
    pub scale: Tensor<T>,
    pub shift: Tensor<T>,
    stats: Mutex<RunningStats<T>>,
}

impl<T: Element> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            scale: Tensor::parameter(Array::ones(&[channels])),
            shift: Tensor::parameter(Array::zeros(&[channels])),
            stats: Mutex::new(RunningStats::new(channels)),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let mut stats = self.stats.lock().expect("running stats lock");
        tensor::batch_norm(x, &self.scale, &self.shift, &mut stats, training)
    }

    pub fn running_stats(&self) -> RunningStats<T> {
        self.stats.lock().expect("running stats lock").clone()
    }

    pub fn set_running_stats(&mut self, stats: RunningStats<T>) {
        *self.stats.get_mut().expect("running stats lock") = stats;
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        f(&format!("{prefix}.scale"), Entry::Param(&self.scale));
        f(&format!("{prefix}.shift"), Entry::Param(&self.shift));
        let stats = self.stats.lock().expect("running stats lock");
        f(&format!("{prefix}.running_mean"), Entry::Buffer(&stats.mean));
        f(&format!("{prefix}.running_var"), Entry::Buffer(&stats.var));
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        f(&format!("{prefix}.scale"), EntryMut::Param(&mut self.scale));
        f(&format!("{prefix}.shift"), EntryMut::Param(&mut self.shift));
        let stats = self.stats.get_mut().expect("running stats lock");
        f(&format!("{prefix}.running_mean"), EntryMut::Buffer(&mut stats.mean));
        f(&format!("{prefix}.running_var"), EntryMut::Buffer(&mut stats.var));
    }
}

/// Convolution followed by batch normalization.
pub struct ConvBn<T: Element, const D: usize> {
    pub conv: Conv<T, D>,
    pub bn: BatchNorm<T>,
}

impl<T: Element, const D: usize> ConvBn<T, D> {
    pub fn new(spec: ConvSpec<D>, rng: &mut impl Rng) -> Self {
        ConvBn {
            bn: BatchNorm::new(spec.out_channels),
            conv: Conv::new(spec, rng),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        self.bn.forward(&self.conv.forward(x)?, training)
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        self.conv.visit(&format!("{prefix}.conv"), f);
        self.bn.visit(&format!("{prefix}.bn"), f);
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        self.conv.visit_mut(&format!("{prefix}.conv"), f);
        self.bn.visit_mut(&format!("{prefix}.bn"), f);
    }
}

pub struct Linear<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Element> Linear<T> {
    pub fn new(in_features: usize, out_features: usize, rng: &mut impl Rng) -> Self {
        Linear {
            weight: Tensor::parameter(init::fan_in_normal(
                &[out_features, in_features],
                in_features,
                rng,
            )),
            bias: Tensor::parameter(Array::zeros(&[out_features])),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        tensor::linear(x, &self.weight, &self.bias)
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        f(&format!("{prefix}.weight"), Entry::Param(&self.weight));
        f(&format!("{prefix}.bias"), Entry::Param(&self.bias));
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        f(&format!("{prefix}.weight"), EntryMut::Param(&mut self.weight));
        f(&format!("{prefix}.bias"), EntryMut::Param(&mut self.bias));
    }
}
