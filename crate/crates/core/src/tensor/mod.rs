//! Tensor arithmetic, reverse-mode autodiff and the operators used by the
//! residual encoders.

mod array;
mod autograd;
pub mod conv;
mod element;
pub mod init;
mod kernels;
pub mod norm;
pub mod ops;
pub mod optim;

pub use array::Array;
pub use autograd::{no_grad, Tensor};
pub use conv::{conv2d, conv3d, Conv2dSpec, Conv3dSpec, ConvSpec};
pub use element::Element;
pub use norm::{batch_norm, RunningStats};
pub use ops::{
    add, bce_loss, global_avg_pool, linear, mean, mul, relu, relu_pattern, reshape, scale, sigmoid, sum,
    Reduction,
};
pub use optim::{CosineSchedule, Sgd, SgdConfig, StepReport};

/// A container of named trainable leaves, visited in a stable order.
pub trait Parameters<T: Element> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor<T>));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>));

    fn zero_grad(&self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }

    fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, p| n += p.value().len());
        n
    }
}
