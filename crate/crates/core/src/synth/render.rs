//! Frame rendering for synthetic lesions.
//!
//! A lesion is an ellipse over a speckled background. Benign interiors are
//! smooth and stable; malignant ones carry a strong static texture plus
//! per-frame flicker. In temporal-only datasets both classes share the same
//! per-frame statistics: the interior texture drifts smoothly for benign
//! lesions and visits the same drift positions in scrambled order for
//! malignant ones.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::metrics::Label;
use crate::preproc::{Frame, Mode};

use super::SignalKind;

/// Smooth noise in [-1, 1]: random lattice values every `cell` pixels,
/// bilinearly interpolated. `w×h` row-major.
pub(crate) fn value_noise(w: usize, h: usize, cell: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let (gw, gh) = (w / cell + 2, h / cell + 2);
    let grid: Vec<f32> = (0..gw * gh).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let (gy, fy) = (y / cell, (y % cell) as f32 / cell as f32);
        for x in 0..w {
            let (gx, fx) = (x / cell, (x % cell) as f32 / cell as f32);
            let g = |i: usize, j: usize| grid[j * gw + i];
            let top = g(gx, gy) * (1.0 - fx) + g(gx + 1, gy) * fx;
            let bot = g(gx, gy + 1) * (1.0 - fx) + g(gx + 1, gy + 1) * fx;
            out[y * w + x] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

/// Everything fixed for one lesion across its segments.
pub(crate) struct LesionScene {
    w: usize,
    h: usize,
    label: Label,
    kind: SignalKind,
    center: (f32, f32),
    radii: (f32, f32),
    background: Vec<f32>,
    /// Interior texture, `tile_w` wide so it can drift horizontally.
    texture: Vec<f32>,
    tile_w: usize,
    /// Drift per frame in pixels (temporal-only datasets).
    drift: f32,
    /// Blobs of Doppler flow: centre, radius, colour.
    flow: Vec<((f32, f32), f32, [f32; 3])>,
    stiffness_hue: [f32; 3],
}

impl LesionScene {
    pub(crate) fn new(w: usize, h: usize, label: Label, kind: SignalKind, rng: &mut ChaCha8Rng) -> Self {
        let (wf, hf) = (w as f32, h as f32);
        let center = (
            wf * rng.random_range(0.4..0.6),
            hf * rng.random_range(0.4..0.6),
        );
        // temporal-only lesions are larger: the cue lives in the interior
        let grow = if kind == SignalKind::Temporal { 1.5 } else { 1.0 };
        let radii = (
            grow * wf * rng.random_range(0.18..0.28),
            grow * hf * rng.random_range(0.18..0.28),
        );
        let cell = (w / 32).max(2);
        let background = value_noise(w, h, cell, rng);
        let tile_w = 2 * w;
        // Temporal-only textures are coarse next to the per-frame drift, so a
        // smooth drift stays correlated frame to frame at any resolution.
        let (tex_cell, drift) = match kind {
            SignalKind::Texture => ((w / 44).max(2), (w as f32 / 88.0).max(1.0)),
            SignalKind::Temporal => {
                let cell = (w / 10).max(4);
                (cell, (cell / 6).max(1) as f32)
            }
        };
        let texture = value_noise(tile_w, h, tex_cell, rng);
        let flow = (0..rng.random_range(1..=3))
            .map(|_| {
                let a = rng.random_range(0.0..std::f32::consts::TAU);
                let c = (center.0 + 0.8 * radii.0 * a.cos(), center.1 + 0.8 * radii.1 * a.sin());
                let r = wf.min(hf) * rng.random_range(0.04..0.08);
                let colour = if rng.random_bool(0.5) {
                    [0.95, 0.15, 0.1]
                } else {
                    [0.1, 0.25, 0.95]
                };
                (c, r, colour)
            })
            .collect();
        let stiffness_hue = match label {
            Label::Malignant => [0.15, 0.3, 0.95],
            Label::Benign => [0.2, 0.9, 0.35],
        };
        LesionScene {
            w,
            h,
            label,
            kind,
            center,
            radii,
            background,
            texture,
            tile_w,
            drift,
            flow,
            stiffness_hue,
        }
    }

    fn inside(&self, x: f32, y: f32, c: (f32, f32), scale: f32) -> bool {
        let dx = (x - c.0) / (self.radii.0 * scale);
        let dy = (y - c.1) / (self.radii.1 * scale);
        dx * dx + dy * dy <= 1.0
    }

    /// Texture drift position (in frames) for frame `i`: identity for benign
    /// lesions, scrambled within 3 s blocks for malignant ones.
    fn drift_step(&self, i: usize, perm: &[usize]) -> usize {
        let b = perm.len();
        match self.label {
            Label::Benign => i,
            Label::Malignant => (i / b) * b + perm[i % b],
        }
    }

    /// Render segment frames `0..n` of `mode`.
    pub(crate) fn render(&self, mode: Mode, n: usize, fps: f64, rng: &mut ChaCha8Rng) -> Vec<Frame> {
        let speckle = Normal::new(0.0f32, 0.02).expect("sigma");
        // scrambling block: 3 s, the clip hop, so every clip sees whole blocks
        let block = ((3.0 * fps).round() as usize).max(1);
        let mut perm: Vec<usize> = (0..block).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), rng);
        let mut flicker_tex = vec![0.0f32; self.w * self.h];
        (0..n)
            .map(|i| {
                let t = i as f32 / fps as f32;
                // slow probe motion
                let c = (
                    self.center.0 + 2.0 * (0.7 * t).sin(),
                    self.center.1 + 1.5 * (0.5 * t).cos(),
                );
                let malignant = self.label.is_malignant();
                if self.kind == SignalKind::Texture && malignant {
                    flicker_tex = value_noise(self.w, self.h, (self.w / 44).max(2), rng);
                }
                let jitter = if self.kind == SignalKind::Texture && malignant {
                    rng.random_range(-0.05f32..0.05)
                } else {
                    0.0
                };
                let shift = match self.kind {
                    SignalKind::Temporal => {
                        (self.drift_step(i, &perm) as f32 * self.drift) as usize % (self.tile_w - self.w)
                    }
                    SignalKind::Texture => 0,
                };
                let elasto_scale = 1.1 + 0.35 * ((i as f32 * 1.7).sin() * 0.5 + 0.5);
                let pulse = 0.75 + 0.25 * (6.0 * t).sin();
                Frame::from_fn(self.w, self.h, |x, y| {
                    let (xf, yf) = (x as f32, y as f32);
                    let k = y * self.w + x;
                    let mut v = 0.3 + 0.06 * self.background[k] + speckle.sample(rng);
                    if self.inside(xf, yf, c, 1.0) {
                        let tex = self.texture[y * self.tile_w + x + shift];
                        v = match (self.kind, malignant) {
                            (SignalKind::Texture, false) => 0.36 + 0.04 * tex,
                            (SignalKind::Texture, true) => {
                                0.36 + 0.28 * tex + 0.15 * flicker_tex[k] + jitter
                            }
                            (SignalKind::Temporal, _) => 0.36 + 0.4 * tex,
                        } + speckle.sample(rng);
                    }
                    let v = v.clamp(0.0, 1.0);
                    let mut px = [v, v, v];
                    match mode {
                        Mode::Grayscale => {}
                        Mode::Doppler => {
                            for &(fc, r, colour) in &self.flow {
                                let d2 = (xf - fc.0).powi(2) + (yf - fc.1).powi(2);
                                if d2 <= (r * pulse).powi(2) {
                                    px = colour;
                                }
                            }
                        }
                        Mode::Elastography => {
                            if self.inside(xf, yf, c, elasto_scale) {
                                let a = 0.7;
                                for ch in 0..3 {
                                    px[ch] = (a * self.stiffness_hue[ch] + (1.0 - a) * v).clamp(0.0, 1.0);
                                }
                            }
                        }
                    }
                    px
                })
            })
            .collect()
    }
}
