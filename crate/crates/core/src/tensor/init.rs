use rand::Rng;
use rand_distr::StandardNormal;

use super::{Array, Element};

/// Normal weights with `std = sqrt(2 / fan_in)`.
pub fn fan_in_normal<T: Element>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Array<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    Array::from_fn(shape, |_| {
        let z: f64 = rng.sample(StandardNormal);
        T::lit(z * std)
    })
}
