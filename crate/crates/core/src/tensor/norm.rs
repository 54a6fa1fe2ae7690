//! Per-channel batch normalization over `N×C×…` tensors.

use crate::error::{Error, Result};

use super::autograd::Backward;
use super::{Array, Element, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Running estimates used in evaluation mode.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Array<T>,
    pub var: Array<T>,
}

impl<T: Element> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: Array::zeros(&[channels]),
            var: Array::ones(&[channels]),
        }
    }
}

struct BatchNormBackward<T> {
    mean: Vec<T>,
    inv_std: Vec<T>,
    training: bool,
}

fn layout(shape: &[usize]) -> (usize, usize, usize) {
    let spatial = shape[2..].iter().product::<usize>();
    (shape[0], shape[1], spatial)
}

impl<T: Element> Backward<T> for BatchNormBackward<T> {
    fn backward(&self, g: &Array<T>, p: &[Tensor<T>]) -> Result<Vec<Option<Array<T>>>> {
        let (x, scale) = (p[0].value(), p[1].value());
        let (n, c, s) = layout(x.shape());
        let m = T::from_usize(n * s).expect("count");
        let xd = x.data();
        let gd = g.data();

        let mut dscale = vec![T::zero(); c];
        let mut dshift = vec![T::zero(); c];
        for ch in 0..c {
            let (mu, inv) = (self.mean[ch], self.inv_std[ch]);
            for i in 0..n {
                let base = (i * c + ch) * s;
                for j in base..base + s {
                    dshift[ch] = dshift[ch] + gd[j];
                    dscale[ch] = dscale[ch] + gd[j] * (xd[j] - mu) * inv;
                }
            }
        }

        let dx = p[0].requires_grad().then(|| {
            let mut dx = vec![T::zero(); xd.len()];
            for ch in 0..c {
                let (mu, inv, gamma) = (self.mean[ch], self.inv_std[ch], scale.data()[ch]);
                for i in 0..n {
                    let base = (i * c + ch) * s;
                    for j in base..base + s {
                        dx[j] = if self.training {
                            // dxhat = g·γ; dx = inv/m · (m·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
                            let xhat = (xd[j] - mu) * inv;
                            gamma * inv / m * (m * gd[j] - dshift[ch] - xhat * dscale[ch])
                        } else {
                            gd[j] * gamma * inv
                        };
                    }
                }
            }
            dx
        });

        Ok(vec![
            dx.map(|d| Array::new(x.shape().to_vec(), d)).transpose()?,
            p[1].requires_grad()
                .then(|| Array::new(vec![c], dscale))
                .transpose()?,
            p[2].requires_grad()
                .then(|| Array::new(vec![c], dshift))
                .transpose()?,
        ])
    }
}

/// Normalize each channel, then apply `scale` and `shift`.
///
/// In training mode the statistics come from the batch (all axes but the
/// channel axis) and `stats` is updated with momentum 0.1 using the unbiased
/// variance; in evaluation mode `stats` is used as-is.
pub fn batch_norm<T: Element>(
    x: &Tensor<T>,
    scale: &Tensor<T>,
    shift: &Tensor<T>,
    stats: &mut RunningStats<T>,
    training: bool,
) -> Result<Tensor<T>> {
    let shape = x.shape();
    if shape.len() < 2 {
        return Err(Error::shape(format!(
            "batch_norm needs an N×C×… input, got {shape:?}"
        )));
    }
    let (n, c, s) = layout(shape);
    for (what, t) in [("scale", scale.shape()), ("shift", shift.shape())] {
        if t != [c] {
            return Err(Error::Axis {
                axis: "C",
                detail: format!("batch_norm {what} has shape {t:?} but input has {c} channels"),
            });
        }
    }
    if stats.mean.shape() != [c] || stats.var.shape() != [c] {
        return Err(Error::Axis {
            axis: "C",
            detail: format!("running statistics do not cover {c} channels"),
        });
    }
    let xd = x.value().data();
    let eps = T::lit(BN_EPS);
    let count = n * s;
    let (mean, var): (Vec<T>, Vec<T>) = if training {
        // statistics accumulate in f64 regardless of the element type
        let m = count as f64;
        (0..c)
            .map(|ch| {
                let vals = (0..n).flat_map(|i| {
                    let base = (i * c + ch) * s;
                    xd[base..base + s].iter().map(|v| v.to_f64().unwrap_or(f64::NAN))
                });
                let mu = vals.clone().sum::<f64>() / m;
                let var = vals.map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
                (T::lit(mu), T::lit(var))
            })
            .unzip()
    } else {
        (stats.mean.data().to_vec(), stats.var.data().to_vec())
    };

    if training {
        let mom = T::lit(BN_MOMENTUM);
        let unbias = if count > 1 {
            T::from_usize(count).expect("count") / T::from_usize(count - 1).expect("count")
        } else {
            T::one()
        };
        for ch in 0..c {
            let rm = &mut stats.mean.data_mut()[ch];
            *rm = (T::one() - mom) * *rm + mom * mean[ch];
            let rv = &mut stats.var.data_mut()[ch];
            *rv = (T::one() - mom) * *rv + mom * var[ch] * unbias;
        }
    }

    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let (gamma, beta) = (scale.value().data(), shift.value().data());
    let mut out = vec![T::zero(); xd.len()];
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * s;
            let (mu, inv, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
            for j in base..base + s {
                out[j] = (xd[j] - mu) * inv * g + b;
            }
        }
    }
    Ok(Tensor::from_op(
        Array::new(shape.to_vec(), out)?,
        vec![x.clone(), scale.clone(), shift.clone()],
        BatchNormBackward {
            mean,
            inv_std,
            training,
        },
    ))
}
