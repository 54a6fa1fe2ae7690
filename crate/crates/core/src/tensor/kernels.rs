//! Hot inner loops for the direct convolution path.
//!
//! Each kernel has one portable body; on x86-64 the same body is also
//! compiled with AVX2 enabled and picked at runtime. Both builds perform the
//! same operations in the same order (no fused multiply-add), so results do
//! not depend on which one runs.
//!
//! The tap kernels read tap `d` of a convolution row as the run starting at
//! `src[offs[d]]`.

use super::Element;

const B: usize = 8;

#[inline(always)]
fn axpy_body<T: Element>(y: &mut [T], a: T, x: &[T]) {
    for (y, &x) in y.iter_mut().zip(x) {
        *y = *y + a * x;
    }
}

/// `y[i] += Σ_d ws[d]·src[offs[d] + i]`, accumulated in `d` order.
#[inline(always)]
fn axpy_taps_body<T: Element>(y: &mut [T], ws: &[T], src: &[T], offs: &[usize]) {
    // common kernel widths get a fully unrolled tap loop
    match ws.len() {
        1 => axpy_taps_fixed::<T, 1>(y, ws, src, offs),
        2 => axpy_taps_fixed::<T, 2>(y, ws, src, offs),
        3 => axpy_taps_fixed::<T, 3>(y, ws, src, offs),
        5 => axpy_taps_fixed::<T, 5>(y, ws, src, offs),
        _ => {
            for (&wv, &o) in ws.iter().zip(offs) {
                axpy_body(y, wv, &src[o..o + y.len()]);
            }
        }
    }
}

#[inline(always)]
fn axpy_taps_fixed<T: Element, const K: usize>(y: &mut [T], ws: &[T], src: &[T], offs: &[usize]) {
    let ws: [T; K] = ws.try_into().expect("tap count");
    let offs: [usize; K] = offs.try_into().expect("tap count");
    let n = y.len();
    let mut i = 0;
    while i + B <= n {
        let mut acc = [T::zero(); B];
        acc.copy_from_slice(&y[i..i + B]);
        for d in 0..K {
            let t = &src[offs[d] + i..offs[d] + i + B];
            for j in 0..B {
                acc[j] = acc[j] + ws[d] * t[j];
            }
        }
        y[i..i + B].copy_from_slice(&acc);
        i += B;
    }
    for i in i..n {
        let mut a = y[i];
        for d in 0..K {
            a = a + ws[d] * src[offs[d] + i];
        }
        y[i] = a;
    }
}

/// `out[d] += Σ_i y[i]·src[offs[d] + i]` for every tap `d`.
#[inline(always)]
fn dot_taps_body<T: Element>(out: &mut [T], y: &[T], src: &[T], offs: &[usize]) {
    match out.len() {
        1 => dot_taps_fixed::<T, 1>(out, y, src, offs),
        2 => dot_taps_fixed::<T, 2>(out, y, src, offs),
        3 => dot_taps_fixed::<T, 3>(out, y, src, offs),
        5 => dot_taps_fixed::<T, 5>(out, y, src, offs),
        _ => {
            for (o, &off) in out.iter_mut().zip(offs) {
                dot_taps_fixed::<T, 1>(std::slice::from_mut(o), y, &src[off..], &[0]);
            }
        }
    }
}

#[inline(always)]
fn dot_taps_fixed<T: Element, const K: usize>(out: &mut [T], y: &[T], src: &[T], offs: &[usize]) {
    let offs: [usize; K] = offs.try_into().expect("tap count");
    let n = y.len();
    let mut acc = [[T::zero(); B]; K];
    let mut i = 0;
    while i + B <= n {
        let yv = &y[i..i + B];
        for d in 0..K {
            let t = &src[offs[d] + i..offs[d] + i + B];
            for j in 0..B {
                acc[d][j] = acc[d][j] + yv[j] * t[j];
            }
        }
        i += B;
    }
    for i in i..n {
        for d in 0..K {
            acc[d][0] = acc[d][0] + y[i] * src[offs[d] + i];
        }
    }
    for d in 0..K {
        out[d] = out[d] + acc[d].iter().fold(T::zero(), |s, &v| s + v);
    }
}

#[cfg(target_arch = "x86_64")]
mod avx2 {
    use super::*;

    #[target_feature(enable = "avx2")]
    pub unsafe fn axpy<T: Element>(y: &mut [T], a: T, x: &[T]) {
        axpy_body(y, a, x)
    }

    #[target_feature(enable = "avx2")]
    pub unsafe fn axpy_taps<T: Element>(y: &mut [T], ws: &[T], src: &[T], offs: &[usize]) {
        axpy_taps_body(y, ws, src, offs)
    }

    #[target_feature(enable = "avx2")]
    pub unsafe fn dot_taps<T: Element>(out: &mut [T], y: &[T], src: &[T], offs: &[usize]) {
        dot_taps_body(out, y, src, offs)
    }
}

#[inline]
fn has_avx2() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::arch::is_x86_feature_detected!("avx2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

#[inline]
fn check_taps(n_taps: usize, offs: &[usize], src_len: usize, run: usize) {
    assert!(
        offs.len() == n_taps && offs.iter().all(|&o| o + run <= src_len),
        "tap offsets out of range"
    );
}

/// `y += a·x` over the common prefix.
#[inline]
pub(crate) fn axpy<T: Element>(y: &mut [T], a: T, x: &[T]) {
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: AVX2 support was detected at runtime.
        return unsafe { avx2::axpy(y, a, x) };
    }
    axpy_body(y, a, x)
}

/// `y[i] += Σ_d ws[d]·src[offs[d] + i]`; the same sums, in the same order,
/// as one [`axpy`] per tap.
#[inline]
pub(crate) fn axpy_taps<T: Element>(y: &mut [T], ws: &[T], src: &[T], offs: &[usize]) {
    check_taps(ws.len(), offs, src.len(), y.len());
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: AVX2 support was detected at runtime.
        return unsafe { avx2::axpy_taps(y, ws, src, offs) };
    }
    axpy_taps_body(y, ws, src, offs)
}

/// `out[d] += y · src[offs[d]..]` for each tap `d`.
#[inline]
pub(crate) fn dot_taps<T: Element>(out: &mut [T], y: &[T], src: &[T], offs: &[usize]) {
    check_taps(out.len(), offs, src.len(), y.len());
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: AVX2 support was detected at runtime.
        return unsafe { avx2::dot_taps(out, y, src, offs) };
    }
    dot_taps_body(out, y, src, offs)
}
