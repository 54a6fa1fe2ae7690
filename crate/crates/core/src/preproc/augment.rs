//! Seeded training-time augmentation: horizontal flip, Gaussian noise and
//! Gaussian blur, each gated by its own Bernoulli draw and applied to every
//! frame of the slice alike.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::Slice;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub p_flip: f64,
    pub p_noise: f64,
    /// Standard deviation as a fraction of the [0, 1] intensity range.
    pub noise_sigma: f64,
    pub p_blur: f64,
    pub blur_kernel: usize,
    pub blur_sigma: (f64, f64),
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            p_flip: 0.2,
            p_noise: 0.2,
            noise_sigma: 0.01,
            p_blur: 0.2,
            blur_kernel: 5,
            blur_sigma: (0.5, 1.5),
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// No transform ever fires.
    pub fn disabled() -> Self {
        AugmentConfig {
            p_flip: 0.0,
            p_noise: 0.0,
            p_blur: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_flip", self.p_flip), ("p_noise", self.p_noise), ("p_blur", self.p_blur)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} = {p} is not a probability")));
            }
        }
        let (lo, hi) = self.blur_sigma;
        if !(self.noise_sigma >= 0.0) || !(lo > 0.0 && lo <= hi) {
            return Err(Error::invalid("noise and blur sigmas must be positive, with blur min ≤ max"));
        }
        if self.blur_kernel % 2 == 0 {
            return Err(Error::invalid("blur kernel size must be odd"));
        }
        Ok(())
    }

    /// Generator for one training sample: stream `sample_index` of the seed.
    fn rng(&self, sample_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(sample_index);
        rng
    }
}

/// Which transforms fire for one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentPlan {
    pub flip: bool,
    pub noise: bool,
    pub blur_sigma: Option<f64>,
}

impl AugmentPlan {
    pub fn draw(config: &AugmentConfig, sample_index: u64) -> Self {
        Self::draw_from(config, &mut config.rng(sample_index))
    }

    fn draw_from(config: &AugmentConfig, rng: &mut ChaCha8Rng) -> Self {
        let u: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let blur = u[2] < config.p_blur;
        let (lo, hi) = config.blur_sigma;
        let sigma = rng.random_range(lo..=hi);
        AugmentPlan {
            flip: u[0] < config.p_flip,
            noise: u[1] < config.p_noise,
            blur_sigma: blur.then_some(sigma),
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.flip && !self.noise && self.blur_sigma.is_none()
    }
}

/// Augmented copy of `slice`; a pure function of `(slice, config.seed,
/// sample_index)`. Order: flip, blur, then noise clamped to [0, 1].
pub fn augment_slice(slice: &Slice, config: &AugmentConfig, sample_index: u64) -> Slice {
    let mut rng = config.rng(sample_index);
    let plan = AugmentPlan::draw_from(config, &mut rng);
    let mut out = slice.clone();
    let (w, h) = (slice.width(), slice.height());
    if plan.flip {
        flip_rows(out.volume.data_mut(), w);
    }
    if let Some(sigma) = plan.blur_sigma {
        let taps = gaussian_taps(config.blur_kernel, sigma);
        for plane in out.volume.data_mut().chunks_mut(w * h) {
            blur_plane(plane, w, h, &taps);
            // convex weights, but rounding can step just past 1
            plane.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        }
    }
    if plan.noise && config.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, config.noise_sigma).expect("finite sigma");
        for v in out.volume.data_mut() {
            *v = (*v as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32;
        }
    }
    out
}

/// Copy of `slice` with its frames in a seeded random order; destroys
/// temporal structure while keeping every frame.
pub fn shuffle_frames(slice: &Slice, seed: u64, stream: u64) -> Slice {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let t = slice.frames();
    let mut order: Vec<usize> = (0..t).collect();
    order.shuffle(&mut rng);
    let plane = slice.width() * slice.height();
    let src = slice.volume.data();
    let mut out = slice.clone();
    let dst = out.volume.data_mut();
    for c in 0..3 {
        for (k, &from) in order.iter().enumerate() {
            let (d, s) = ((c * t + k) * plane, (c * t + from) * plane);
            dst[d..d + plane].copy_from_slice(&src[s..s + plane]);
        }
    }
    out
}

pub(crate) fn flip_rows(data: &mut [f32], width: usize) {
    for row in data.chunks_mut(width) {
        row.reverse();
    }
}

/// Normalized 1D Gaussian of odd length `k`.
pub fn gaussian_taps(k: usize, sigma: f64) -> Vec<f32> {
    let r = (k / 2) as f64;
    let g: Vec<f64> = (0..k)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| (v / s) as f32).collect()
}

/// Separable blur with edge replication.
fn blur_plane(plane: &mut [f32], w: usize, h: usize, taps: &[f32]) {
    let r = taps.len() / 2;
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &t) in taps.iter().enumerate() {
                let xx = (x + j).saturating_sub(r).min(w - 1);
                acc += t * row[xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &t) in taps.iter().enumerate() {
                let yy = (y + j).saturating_sub(r).min(h - 1);
                acc += t * tmp[yy * w + x];
            }
            plane[y * w + x] = acc;
        }
    }
}
