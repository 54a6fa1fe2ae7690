//! 2D and 3D convolution via chunked im2col and GEMM.
//!
//! Both ranks share one kernel: a 2D convolution is a 3D one with a unit
//! leading axis. Layers with few output channels (the wide, shallow stages)
//! skip im2col and accumulate rows directly, where GEMM would be starved. Batch items are processed independently (optionally in
//! parallel) and their weight gradients are reduced in batch order, so
//! results do not depend on the worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::autograd::Backward;
use super::kernels;
use super::{Array, Element, Tensor};

/// Upper bound on im2col buffer elements per batch item.
const COL_BUDGET: usize = 1 << 21;
/// Up to this many output channels the direct row kernel is used.
const DIRECT_MAX_COUT: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvSpec<const D: usize> {
    pub kernel: [usize; D],
    pub stride: [usize; D],
    pub padding: [usize; D],
    pub in_channels: usize,
    pub out_channels: usize,
}

pub type Conv3dSpec = ConvSpec<3>;
pub type Conv2dSpec = ConvSpec<2>;

impl<const D: usize> ConvSpec<D> {
    /// Same kernel, stride and padding on every axis.
    pub fn uniform(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        ConvSpec {
            kernel: [kernel; D],
            stride: [stride; D],
            padding: [padding; D],
            in_channels,
            out_channels,
        }
    }

    pub fn axis_names() -> &'static [&'static str] {
        match D {
            3 => &["T", "H", "W"],
            2 => &["H", "W"],
            1 => &["W"],
            _ => panic!("unsupported convolution rank {D}"),
        }
    }

    /// `floor((in + 2·pad − kernel) / stride) + 1` per axis.
    pub fn output_extents(&self, input: [usize; D]) -> Result<[usize; D]> {
        let mut out = [0; D];
        for axis in 0..D {
            let name = Self::axis_names()[axis];
            let (k, s, p) = (self.kernel[axis], self.stride[axis], self.padding[axis]);
            if k == 0 || s == 0 {
                return Err(Error::Axis {
                    axis: name,
                    detail: format!("kernel {k} and stride {s} must be positive"),
                });
            }
            let padded = input[axis] + 2 * p;
            if padded < k {
                return Err(Error::Axis {
                    axis: name,
                    detail: format!(
                        "extent {} with padding {p} is smaller than kernel {k}",
                        input[axis]
                    ),
                });
            }
            out[axis] = (padded - k) / s + 1;
        }
        Ok(out)
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        let mut s = vec![self.out_channels, self.in_channels];
        s.extend_from_slice(&self.kernel);
        s
    }

    /// Input features feeding each output element.
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }

    /// Output shape for an `N×C×spatial` input shape, validating channels.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != D + 2 {
            return Err(Error::shape(format!(
                "convolution of rank {D} expects an input of rank {}, got {input:?}",
                D + 2
            )));
        }
        if input[1] != self.in_channels {
            return Err(Error::Axis {
                axis: "C",
                detail: format!(
                    "input has {} channels, convolution expects {}",
                    input[1], self.in_channels
                ),
            });
        }
        let mut spatial = [0; D];
        spatial.copy_from_slice(&input[2..]);
        let out = self.output_extents(spatial)?;
        let mut shape = vec![input[0], self.out_channels];
        shape.extend_from_slice(&out);
        Ok(shape)
    }

    fn geometry(&self, input: &[usize]) -> Result<Geometry> {
        let out = self.output_shape(input)?;
        let lift = |v: &[usize], fill: usize| {
            let mut a = [fill; 3];
            a[3 - D..].copy_from_slice(v);
            a
        };
        Ok(Geometry {
            cin: self.in_channels,
            cout: self.out_channels,
            input: lift(&input[2..], 1),
            output: lift(&out[2..], 1),
            kernel: lift(&self.kernel, 1),
            stride: lift(&self.stride, 1),
            padding: lift(&self.padding, 0),
            direct: self.out_channels <= DIRECT_MAX_COUT,
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    cin: usize,
    cout: usize,
    input: [usize; 3],
    output: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    padding: [usize; 3],
    direct: bool,
}

impl Geometry {
    fn in_len(&self) -> usize {
        self.cin * self.input.iter().product::<usize>()
    }

    fn positions(&self) -> usize {
        self.output.iter().product()
    }

    fn patch(&self) -> usize {
        self.cin * self.kernel.iter().product::<usize>()
    }

    /// Number of (t, h) output rows per im2col chunk.
    fn rows_per_chunk(&self) -> usize {
        (COL_BUDGET / (self.patch() * self.output[2])).max(1)
    }

    fn row_count(&self) -> usize {
        self.output[0] * self.output[1]
    }

    /// Valid output-column range for kernel offset `kw` along the last axis.
    fn valid_cols(&self, kw: usize) -> (usize, usize) {
        let (iw, ow, sw, pw) = (self.input[2], self.output[2], self.stride[2], self.padding[2]);
        // 0 <= wo*sw + kw - pw < iw
        let lo = if pw > kw { (pw - kw).div_ceil(sw) } else { 0 };
        let hi = if iw + pw > kw {
            ((iw + pw - kw - 1) / sw + 1).min(ow)
        } else {
            0
        };
        (lo.min(hi), hi)
    }

    /// Visit every (patch row, output row) pair in a chunk, passing the
    /// input row offset (or `None` when the row lies in padding) and the
    /// destination offset into the chunk buffer.
    fn for_each_row(&self, rows: std::ops::Range<usize>, mut f: impl FnMut(usize, usize, Option<usize>, usize)) {
        let [it, ih, iw] = self.input;
        let [kt, kh, kw] = self.kernel;
        let [st, sh, _] = self.stride;
        let [pt, ph, _] = self.padding;
        let oh = self.output[1];
        let ow = self.output[2];
        let ncols = rows.len() * ow;
        for c in 0..self.cin {
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let r = ((c * kt + dt) * kh + dh) * kw + dw;
                        for (i, row) in rows.clone().enumerate() {
                            let (to, ho) = (row / oh, row % oh);
                            let ti = (to * st + dt) as isize - pt as isize;
                            let hi = (ho * sh + dh) as isize - ph as isize;
                            let dst = r * ncols + i * ow;
                            let src = (ti >= 0 && (ti as usize) < it && hi >= 0 && (hi as usize) < ih)
                                .then(|| ((c * it + ti as usize) * ih + hi as usize) * iw);
                            f(dw, r, src, dst);
                        }
                    }
                }
            }
        }
    }

    fn im2col<T: Element>(&self, x: &[T], rows: std::ops::Range<usize>, cols: &mut [T]) {
        let ow = self.output[2];
        let (sw, pw) = (self.stride[2], self.padding[2]);
        self.for_each_row(rows, |dw, _, src, dst| {
            let out = &mut cols[dst..dst + ow];
            let Some(src) = src else {
                out.fill(T::zero());
                return;
            };
            let (lo, hi) = self.valid_cols(dw);
            out[..lo].fill(T::zero());
            out[hi..].fill(T::zero());
            if sw == 1 {
                let start = src + lo + dw - pw;
                out[lo..hi].copy_from_slice(&x[start..start + (hi - lo)]);
            } else {
                for (wo, o) in out.iter_mut().enumerate().take(hi).skip(lo) {
                    *o = x[src + wo * sw + dw - pw];
                }
            }
        });
    }

    fn col2im_add<T: Element>(&self, cols: &[T], rows: std::ops::Range<usize>, dx: &mut [T]) {
        let (sw, pw) = (self.stride[2], self.padding[2]);
        self.for_each_row(rows, |dw, _, src, dst| {
            let Some(src) = src else { return };
            let (lo, hi) = self.valid_cols(dw);
            for wo in lo..hi {
                let xi = src + wo * sw + dw - pw;
                dx[xi] = dx[xi] + cols[dst + wo];
            }
        });
    }

    /// Calls `f(r0, src)` for every in-bounds input row feeding output row
    /// `(to, ho)`: `r0` is the patch index of the row's first tap, `src` the
    /// row's offset in the sample.
    fn for_each_input_row(&self, to: usize, ho: usize, mut f: impl FnMut(usize, usize)) {
        let [it, ih, iw] = self.input;
        let [kt, kh, kw] = self.kernel;
        let [st, sh, _] = self.stride;
        let [pt, ph, _] = self.padding;
        for ci in 0..self.cin {
            for dt in 0..kt {
                let ti = (to * st + dt).wrapping_sub(pt);
                if ti >= it {
                    continue;
                }
                for dh in 0..kh {
                    let hi = (ho * sh + dh).wrapping_sub(ph);
                    if hi >= ih {
                        continue;
                    }
                    f(((ci * kt + dt) * kh + dh) * kw, ((ci * it + ti) * ih + hi) * iw);
                }
            }
        }
    }

    /// Length of one stride phase of a zero-padded input row.
    fn phase_len(&self) -> usize {
        (self.input[2] + 2 * self.padding[2]).div_ceil(self.stride[2])
    }

    /// Where tap `dw` starts in the phase-split row: padded position
    /// `wo·sw + dw` lives in phase `dw mod sw` at index `wo + dw div sw`,
    /// so every tap is a contiguous run of `ow` values.
    fn tap_offsets(&self) -> Vec<usize> {
        let (sw, l) = (self.stride[2], self.phase_len());
        (0..self.kernel[2]).map(|d| (d % sw) * l + d / sw).collect()
    }

    /// Width of one input row in the phase-split layout.
    fn split_width(&self) -> usize {
        self.phase_len() * self.stride[2]
    }

    /// Index in a phase-split row of padded position `j`.
    fn split_index(&self, j: usize) -> usize {
        let sw = self.stride[2];
        (j % sw) * self.phase_len() + j / sw
    }

    /// Every input row of a sample, zero-padded along W and split into
    /// stride phases, so each tap of every row is one contiguous run.
    fn split_sample<T: Element>(&self, x: &[T]) -> Vec<T> {
        let (iw, pw) = (self.input[2], self.padding[2]);
        let rw = self.split_width();
        let map: Vec<usize> = (0..iw).map(|i| self.split_index(i + pw)).collect();
        let mut out = vec![T::zero(); x.len() / iw * rw];
        for (dst, row) in out.chunks_mut(rw).zip(x.chunks(iw)) {
            for (&m, &v) in map.iter().zip(row) {
                dst[m] = v;
            }
        }
        out
    }

    /// Inverse of [`Self::split_sample`], dropping the padding.
    fn merge_sample<T: Element>(&self, split: &[T], dx: &mut [T]) {
        let (iw, pw) = (self.input[2], self.padding[2]);
        let map: Vec<usize> = (0..iw).map(|i| self.split_index(i + pw)).collect();
        for (row, src) in dx.chunks_mut(iw).zip(split.chunks(self.split_width())) {
            for (&m, v) in map.iter().zip(row) {
                *v = *v + src[m];
            }
        }
    }

    fn forward_direct<T: Element>(&self, x: &[T], w: &[T], b: &[T], out: &mut [T]) {
        let (k, p, ow, kw) = (self.patch(), self.positions(), self.output[2], self.kernel[2]);
        let (iw, rw) = (self.input[2], self.split_width());
        let offs = self.tap_offsets();
        let xs = self.split_sample(x);
        let mut acc = vec![T::zero(); self.cout * ow];
        for row in 0..self.row_count() {
            let (to, ho) = (row / self.output[1], row % self.output[1]);
            for (a, &bias) in acc.chunks_mut(ow).zip(b) {
                a.fill(bias);
            }
            self.for_each_input_row(to, ho, |r0, src| {
                let r = src / iw;
                let t = &xs[r * rw..(r + 1) * rw];
                for (co, a) in acc.chunks_mut(ow).enumerate() {
                    kernels::axpy_taps(a, &w[co * k + r0..co * k + r0 + kw], t, &offs);
                }
            });
            for (co, a) in acc.chunks(ow).enumerate() {
                out[co * p + row * ow..co * p + (row + 1) * ow].copy_from_slice(a);
            }
        }
    }

    fn backward_direct<T: Element>(
        &self,
        x: &[T],
        w: &[T],
        dy: &[T],
        dx: Option<&mut [T]>,
    ) -> Vec<T> {
        let (k, p, ow, kw) = (self.patch(), self.positions(), self.output[2], self.kernel[2]);
        let (iw, rw) = (self.input[2], self.split_width());
        let offs = self.tap_offsets();
        let xs = self.split_sample(x);
        let mut dxs = dx.as_ref().map(|_| vec![T::zero(); xs.len()]);
        let mut dw = vec![T::zero(); self.cout * k];
        for row in 0..self.row_count() {
            let (to, ho) = (row / self.output[1], row % self.output[1]);
            self.for_each_input_row(to, ho, |r0, src| {
                let r = src / iw;
                let t = &xs[r * rw..(r + 1) * rw];
                for co in 0..self.cout {
                    let dyr = &dy[co * p + row * ow..co * p + (row + 1) * ow];
                    let base = co * k + r0;
                    kernels::dot_taps(&mut dw[base..base + kw], dyr, t, &offs);
                    if let Some(dxs) = dxs.as_mut() {
                        let dt = &mut dxs[r * rw..(r + 1) * rw];
                        for (d, &o) in offs.iter().enumerate() {
                            kernels::axpy(&mut dt[o..o + ow], w[base + d], dyr);
                        }
                    }
                }
            });
        }
        if let (Some(dx), Some(dxs)) = (dx, dxs) {
            self.merge_sample(&dxs, dx);
        }
        dw
    }

    fn forward_sample<T: Element>(&self, x: &[T], w: &[T], b: &[T], out: &mut [T]) {
        if self.direct {
            return self.forward_direct(x, w, b, out);
        }
        let (k, p, ow) = (self.patch(), self.positions(), self.output[2]);
        let per = self.rows_per_chunk();
        let mut cols = vec![T::zero(); k * per.min(self.row_count()) * ow];
        let mut row0 = 0;
        while row0 < self.row_count() {
            let row1 = (row0 + per).min(self.row_count());
            let nc = (row1 - row0) * ow;
            let buf = &mut cols[..k * nc];
            self.im2col(x, row0..row1, buf);
            let p0 = row0 * ow;
            T::gemm(
                self.cout,
                k,
                nc,
                T::one(),
                w,
                (k as isize, 1),
                buf,
                (nc as isize, 1),
                T::zero(),
                &mut out[p0..],
                (p as isize, 1),
            );
            row0 = row1;
        }
        for (chan, &bias) in out.chunks_mut(p).zip(b) {
            if bias != T::zero() {
                chan.iter_mut().for_each(|v| *v = *v + bias);
            }
        }
    }

    /// Returns (dW, db) for one sample and writes dx when requested.
    fn backward_sample<T: Element>(
        &self,
        x: &[T],
        w: &[T],
        dy: &[T],
        dx: Option<&mut [T]>,
    ) -> (Vec<T>, Vec<T>) {
        let (k, p, ow) = (self.patch(), self.positions(), self.output[2]);
        let db: Vec<T> = dy.chunks(p).map(|c| c.iter().copied().sum()).collect();
        if self.direct {
            return (self.backward_direct(x, w, dy, dx), db);
        }
        let mut dw = vec![T::zero(); self.cout * k];
        let per = self.rows_per_chunk();
        let cap = k * per.min(self.row_count()) * ow;
        let mut cols = vec![T::zero(); cap];
        let mut dcols = if dx.is_some() {
            vec![T::zero(); cap]
        } else {
            Vec::new()
        };
        let mut dx = dx;
        let mut row0 = 0;
        let mut first = true;
        while row0 < self.row_count() {
            let row1 = (row0 + per).min(self.row_count());
            let nc = (row1 - row0) * ow;
            let p0 = row0 * ow;
            let buf = &mut cols[..k * nc];
            self.im2col(x, row0..row1, buf);
            T::gemm(
                self.cout,
                nc,
                k,
                T::one(),
                &dy[p0..],
                (p as isize, 1),
                buf,
                (1, nc as isize),
                if first { T::zero() } else { T::one() },
                &mut dw,
                (k as isize, 1),
            );
            if let Some(dx) = dx.as_deref_mut() {
                let dbuf = &mut dcols[..k * nc];
                T::gemm(
                    k,
                    self.cout,
                    nc,
                    T::one(),
                    w,
                    (1, k as isize),
                    &dy[p0..],
                    (p as isize, 1),
                    T::zero(),
                    dbuf,
                    (nc as isize, 1),
                );
                self.col2im_add(dbuf, row0..row1, dx);
            }
            first = false;
            row0 = row1;
        }
        (dw, db)
    }
}

struct ConvBackward {
    geom: Geometry,
}

impl<T: Element> Backward<T> for ConvBackward {
    fn backward(&self, g: &Array<T>, parents: &[Tensor<T>]) -> Result<Vec<Option<Array<T>>>> {
        let geom = self.geom;
        let (x, w, b) = (&parents[0], &parents[1], &parents[2]);
        let n = x.shape()[0];
        let in_len = geom.in_len();
        let out_len = geom.cout * geom.positions();
        let need_dx = x.requires_grad();
        let xd = x.value().data();
        let wd = w.value().data();
        let gd = g.data();

        let per_sample: Vec<(Option<Vec<T>>, Vec<T>, Vec<T>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let xs = &xd[i * in_len..(i + 1) * in_len];
                let dys = &gd[i * out_len..(i + 1) * out_len];
                let mut dx = need_dx.then(|| vec![T::zero(); in_len]);
                let (dw, db) = geom.backward_sample(xs, wd, dys, dx.as_deref_mut());
                (dx, dw, db)
            })
            .collect();

        let mut dx_all = need_dx.then(|| Vec::with_capacity(n * in_len));
        let mut dw_all = vec![T::zero(); w.value().len()];
        let mut db_all = vec![T::zero(); geom.cout];
        for (dx, dw, db) in per_sample {
            if let (Some(all), Some(dx)) = (dx_all.as_mut(), dx) {
                all.extend_from_slice(&dx);
            }
            for (a, v) in dw_all.iter_mut().zip(dw) {
                *a = *a + v;
            }
            for (a, v) in db_all.iter_mut().zip(db) {
                *a = *a + v;
            }
        }
        Ok(vec![
            dx_all
                .map(|d| Array::new(x.shape().to_vec(), d))
                .transpose()?,
            w.requires_grad()
                .then(|| Array::new(w.shape().to_vec(), dw_all))
                .transpose()?,
            b.requires_grad()
                .then(|| Array::new(b.shape().to_vec(), db_all))
                .transpose()?,
        ])
    }
}

/// Convolution of any supported rank; [`conv3d`] and [`conv2d`] fix the rank.
pub fn conv_nd<T: Element, const D: usize>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    spec: &ConvSpec<D>,
) -> Result<Tensor<T>> {
    let out_shape = spec.output_shape(x.shape())?;
    if w.shape() != spec.weight_shape().as_slice() {
        return Err(Error::shape(format!(
            "convolution weights have shape {:?}, expected {:?}",
            w.shape(),
            spec.weight_shape()
        )));
    }
    if b.shape() != [spec.out_channels] {
        return Err(Error::shape(format!(
            "convolution bias has shape {:?}, expected [{}]",
            b.shape(),
            spec.out_channels
        )));
    }
    let geom = spec.geometry(x.shape())?;
    let n = x.shape()[0];
    let in_len = geom.in_len();
    let out_len = geom.cout * geom.positions();
    let mut out = vec![T::zero(); n * out_len];
    let (xd, wd, bd) = (x.value().data(), w.value().data(), b.value().data());
    out.par_chunks_mut(out_len).enumerate().for_each(|(i, o)| {
        geom.forward_sample(&xd[i * in_len..(i + 1) * in_len], wd, bd, o);
    });
    let y = Array::new(out_shape, out)?;
    Ok(Tensor::from_op(
        y,
        vec![x.clone(), w.clone(), b.clone()],
        ConvBackward { geom },
    ))
}

/// 3D convolution over an `N×C×T×H×W` input with `out×in×kT×kH×kW` weights.
pub fn conv3d<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    spec: &Conv3dSpec,
) -> Result<Tensor<T>> {
    conv_nd(x, w, b, spec)
}

/// 2D convolution over an `N×C×H×W` input with `out×in×kH×kW` weights.
pub fn conv2d<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    spec: &Conv2dSpec,
) -> Result<Tensor<T>> {
    conv_nd(x, w, b, spec)
}
