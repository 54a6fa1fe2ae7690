//! Differentiable elementwise, reduction and affine operators.

use std::cell::Cell;

use crate::error::{Error, Result};

use super::autograd::Backward;
use super::{Array, Element, Tensor};

/// Probability clamp applied before taking logarithms in [`bce_loss`].
pub const BCE_EPS: f64 = 1e-7;

struct Relu;

impl<T: Element> Backward<T> for Relu {
    fn backward(&self, g: &Array<T>, p: &[Tensor<T>]) -> Result<Vec<Option<Array<T>>>> {
        let x = p[0].value();
        let dx = x.zip_map(g, |x, g| if x > T::zero() { g } else { T::zero() })?;
        Ok(vec![Some(dx)])
    }
}

thread_local! {
    static RELU_TRACE: Cell<Option<u64>> = const { Cell::new(None) };
}

/// Run `f` and fingerprint the active set of every [`relu`] it evaluates on
/// this thread. Finite-difference checks use it to tell when a ±h step
/// crossed a kink.
pub fn relu_pattern<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let outer = RELU_TRACE.with(|t| t.replace(Some(0xcbf2_9ce4_8422_2325)));
    let r = f();
    let h = RELU_TRACE.with(|t| t.replace(outer)).expect("trace was armed");
    (r, h)
}

pub fn relu<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    RELU_TRACE.with(|t| {
        if let Some(mut h) = t.get() {
            for v in x.value().data() {
                h = (h ^ u64::from(*v > T::zero())).wrapping_mul(0x100_0000_01b3);
            }
            t.set(Some(h));
        }
    });
    let y = x.value().map(|v| v.max(T::zero()));
    Tensor::from_op(y, vec![x.clone()], Relu)
}

fn sigmoid_scalar<T: Element>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

struct Sigmoid<T> {
    y: Array<T>,
}

impl<T: Element> Backward<T> for Sigmoid<T> {
    fn backward(&self, g: &Array<T>, _: &[Tensor<T>]) -> Result<Vec<Option<Array<T>>>> {
        let dx = self.y.zip_map(g, |y, g| g * y * (T::one() - y))?;
        Ok(vec![Some(dx)])
    }
}

pub fn sigmoid<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let y = x.value().map(sigmoid_scalar);
    Tensor::from_op(y.clone(), vec![x.clone()], Sigmoid { y })
}

struct Add;

impl<T: Element> Backward<T> for Add {
    fn backward(&self, g: &Array<T>, _: &[Tensor<T>]) -> Result<Vec<Option<Array<T>>>> {
        Ok(vec![Some(g.clone()), Some(g.clone())])
    }
}

pub fn add<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let y = a.value().zip_map(b.value(), |a, b| a + b)?;
    Ok(Tensor::from_op(y, vec![a.clone(), b.clone()], Add))
}

struct Mul;

impl<T: Element> Backward<T> for Mul {
    fn backward(&self, g: &Array<T>, p: &[Tensor<T>]) -> Result<Vec<Option<Array<T>>>> {
        let da = p[0]
            .requires_grad()
            .then(|| g.zip_map(p[1].value(), |g, b| g * b))
            .transpose()?;
        let db = p[1]
            .requires_grad()
            .then(|| g.zip_map(p[0].value(), |g, a| g * a))
            .transpose()?;
        Ok(vec![da, db])
    }
}

/// Elementwise (Hadamard) product.
pub fn mul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let y = a.value().zip_map(b.value(), |a, b| a * b)?;
    Ok(Tensor::from_op(y, vec![a.clone(), b.clone()], Mul))
}

struct Scale<T> {
    factor: T,
}

impl<T: Element> Backward<T> for Scale<T> {
    fn backward(&self, g: &Array<T>, _: &[Tensor<T>]) -> Result<Vec<Option<Array<T>>>> {
        Ok(vec![Some(g.scale(self.factor))])
    }
}

pub fn scale<T: Element>(x: &Tensor<T>, factor: T) -> Tensor<T> {
    Tensor::from_op(x.value().scale(factor), vec![x.clone()], Scale { factor })
}

struct Sum;

impl<T: Element> Backward<T> for Sum {
    fn backward(&self, g: &Array<T>, p: &[Tensor<T>]) -> Result<Vec<Option<Array<T>>>> {
        Ok(vec![Some(Array::full(p[0].shape(), g.data()[0]))])
    }
}

/// Sum of all elements, as a one-element tensor.
pub fn sum<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::from_op(Array::scalar(x.value().sum()), vec![x.clone()], Sum)
}

pub fn mean<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let n = T::from_usize(x.value().len()).expect("count");
    scale(&sum(x), T::one() / n)
}

struct Reshape;

impl<T: Element> Backward<T> for Reshape {
    fn backward(&self, g: &Array<T>, p: &[Tensor<T>]) -> Result<Vec<Option<Array<T>>>> {
        Ok(vec![Some(g.clone().reshape(p[0].shape())?)])
    }
}

pub fn reshape<T: Element>(x: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    let y = x.value().clone().reshape(shape)?;
    Ok(Tensor::from_op(y, vec![x.clone()], Reshape))
}

struct GlobalAvgPool {
    spatial: usize,
}

impl<T: Element> Backward<T> for GlobalAvgPool {
    fn backward(&self, g: &Array<T>, p: &[Tensor<T>]) -> Result<Vec<Option<Array<T>>>> {
        let inv = T::one() / T::from_usize(self.spatial).expect("count");
        let mut dx = Array::zeros(p[0].shape());
        for (chunk, &gv) in dx.data_mut().chunks_mut(self.spatial).zip(g.data()) {
            chunk.fill(gv * inv);
        }
        Ok(vec![Some(dx)])
    }
}

/// Mean over every axis after the first two: `N×C×…` → `N×C`.
pub fn global_avg_pool<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = x.shape();
    if shape.len() < 3 {
        return Err(Error::shape(format!(
            "global_avg_pool needs rank >= 3, got shape {shape:?}"
        )));
    }
    let (n, c) = (shape[0], shape[1]);
    let spatial: usize = shape[2..].iter().product();
    let inv = T::one() / T::from_usize(spatial).expect("count");
    let data = x
        .value()
        .data()
        .chunks(spatial)
        .map(|chunk| chunk.iter().copied().sum::<T>() * inv)
        .collect();
    let y = Array::new(vec![n, c], data)?;
    Ok(Tensor::from_op(y, vec![x.clone()], GlobalAvgPool { spatial }))
}

struct Linear;

impl<T: Element> Backward<T> for Linear {
    fn backward(&self, g: &Array<T>, p: &[Tensor<T>]) -> Result<Vec<Option<Array<T>>>> {
        let (x, w) = (p[0].value(), p[1].value());
        let (n, fin) = (x.shape()[0], x.shape()[1]);
        let fout = w.shape()[0];
        let dx = p[0].requires_grad().then(|| {
            // dx[n×fin] = g[n×fout] · w[fout×fin]
            let mut dx = Array::zeros(&[n, fin]);
            T::gemm(
                n,
                fout,
                fin,
                T::one(),
                g.data(),
                (fout as isize, 1),
                w.data(),
                (fin as isize, 1),
                T::zero(),
                dx.data_mut(),
                (fin as isize, 1),
            );
            dx
        });
        let dw = p[1].requires_grad().then(|| {
            // dw[fout×fin] = gᵀ · x
            let mut dw = Array::zeros(&[fout, fin]);
            T::gemm(
                fout,
                n,
                fin,
                T::one(),
                g.data(),
                (1, fout as isize),
                x.data(),
                (fin as isize, 1),
                T::zero(),
                dw.data_mut(),
                (fin as isize, 1),
            );
            dw
        });
        let db = p[2].requires_grad().then(|| {
            let mut db = Array::zeros(&[fout]);
            for row in g.data().chunks(fout) {
                for (d, &v) in db.data_mut().iter_mut().zip(row) {
                    *d = *d + v;
                }
            }
            db
        });
        Ok(vec![dx, dw, db])
    }
}

/// Affine map `x · wᵀ + b` with `x: N×F_in`, `w: F_out×F_in`, `b: F_out`.
pub fn linear<T: Element>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (xs, ws, bs) = (x.shape(), w.shape(), b.shape());
    if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 {
        return Err(Error::shape(format!(
            "linear expects N×F_in, F_out×F_in, F_out; got {xs:?}, {ws:?}, {bs:?}"
        )));
    }
    let (n, fin, fout) = (xs[0], xs[1], ws[0]);
    if ws[1] != fin {
        return Err(Error::shape(format!(
            "linear input has {fin} features but weights expect {}",
            ws[1]
        )));
    }
    if bs[0] != fout {
        return Err(Error::shape(format!(
            "linear bias has {} entries, expected {fout}",
            bs[0]
        )));
    }
    let mut y = Array::zeros(&[n, fout]);
    for row in y.data_mut().chunks_mut(fout) {
        row.copy_from_slice(b.value().data());
    }
    T::gemm(
        n,
        fin,
        fout,
        T::one(),
        x.value().data(),
        (fin as isize, 1),
        w.value().data(),
        (1, fin as isize),
        T::one(),
        y.data_mut(),
        (fout as isize, 1),
    );
    Ok(Tensor::from_op(y, vec![x.clone(), w.clone(), b.clone()], Linear))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}

struct Bce<T> {
    clamped: Vec<T>,
    labels: Vec<T>,
    weight: T,
}

impl<T: Element> Backward<T> for Bce<T> {
    fn backward(&self, g: &Array<T>, p: &[Tensor<T>]) -> Result<Vec<Option<Array<T>>>> {
        let g = g.data()[0] * self.weight;
        // d/dp of the clamped loss, evaluated at the clamped probability.
        let data = self
            .clamped
            .iter()
            .zip(&self.labels)
            .map(|(&p, &y)| g * (p - y) / (p * (T::one() - p)))
            .collect();
        Ok(vec![Some(Array::new(p[0].shape().to_vec(), data)?)])
    }
}

/// Binary cross-entropy `−(y ln p + (1−y) ln(1−p))` with `p` clamped to
/// `[1e-7, 1 − 1e-7]`.
pub fn bce_loss<T: Element>(
    scores: &Tensor<T>,
    labels: &[T],
    reduction: Reduction,
) -> Result<Tensor<T>> {
    if scores.value().len() != labels.len() {
        return Err(Error::shape(format!(
            "bce_loss: {} scores vs {} labels",
            scores.value().len(),
            labels.len()
        )));
    }
    let eps = T::lit(BCE_EPS);
    let clamped: Vec<T> = scores
        .value()
        .data()
        .iter()
        .map(|&p| p.max(eps).min(T::one() - eps))
        .collect();
    let total: T = clamped
        .iter()
        .zip(labels)
        .map(|(&p, &y)| -(y * p.ln() + (T::one() - y) * (T::one() - p).ln()))
        .sum();
    let weight = match reduction {
        Reduction::Sum => T::one(),
        Reduction::Mean => T::one() / T::from_usize(labels.len()).expect("count"),
    };
    Ok(Tensor::from_op(
        Array::scalar(total * weight),
        vec![scores.clone()],
        Bce {
            clamped,
            labels: labels.to_vec(),
            weight,
        },
    ))
}
