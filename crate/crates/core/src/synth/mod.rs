//! Seeded generator of labelled EBUS-like videos, the dataset manifest and
//! the patient-level train/validation split.

pub mod manifest;
mod render;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::Label;
use crate::preproc::{frame_file_name, Frame, Mode};

pub use manifest::{
    split_by_patient, validate_manifest, LesionRecord, Manifest, PatientRecord, SegmentEntry,
    Violation, MANIFEST_FILE, MANIFEST_HEADER,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Validation,
    Unassigned,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Unassigned => "none",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Validation),
            "none" => Ok(Split::Unassigned),
            other => Err(Error::invalid(format!("unknown split {other:?} (train, val or none)"))),
        }
    }
}

/// Where the class signal lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalKind {
    /// Spatial texture variance plus temporal flicker (the default).
    Texture,
    /// Temporal order only; single frames carry no class information.
    Temporal,
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalKind::Texture => "texture",
            SignalKind::Temporal => "temporal",
        })
    }
}

impl FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "texture" => Ok(SignalKind::Texture),
            "temporal" => Ok(SignalKind::Temporal),
            other => Err(Error::invalid(format!("unknown signal kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub patients: usize,
    /// Inclusive range.
    pub lesions_per_patient: (usize, usize),
    /// Fraction of lesions that are malignant.
    pub malignant_fraction: f64,
    pub fps: f64,
    /// Grayscale and Doppler segment lengths, seconds.
    pub duration: (f64, f64),
    pub elasto_duration: (f64, f64),
    pub width: usize,
    pub height: usize,
    pub p_doppler: f64,
    pub p_elastography: f64,
    pub signal: SignalKind,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            patients: 20,
            lesions_per_patient: (2, 2),
            malignant_fraction: 0.5,
            fps: 8.0,
            duration: (6.0, 10.0),
            elasto_duration: (1.0, 2.0),
            width: 704,
            height: 576,
            p_doppler: 0.8,
            p_elastography: 0.6,
            signal: SignalKind::Texture,
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(m));
        let (lo, hi) = self.lesions_per_patient;
        if self.patients == 0 || lo == 0 || lo > hi {
            return fail(format!("need ≥ 1 patient and 1 ≤ lesions min ≤ max, got {lo}..={hi}"));
        }
        if !(self.malignant_fraction > 0.0 && self.malignant_fraction < 1.0) {
            return fail(format!("malignant fraction {} is outside (0, 1)", self.malignant_fraction));
        }
        if !(self.fps > 0.0) {
            return fail(format!("fps {} must be positive", self.fps));
        }
        for (name, (a, b)) in [("duration", self.duration), ("elasto_duration", self.elasto_duration)] {
            if !(a >= 0.0 && a <= b) {
                return fail(format!("{name} range {a}..{b} must satisfy 0 ≤ min ≤ max"));
            }
        }
        if self.width < 8 || self.height < 8 {
            return fail(format!("frame {}×{} is too small", self.width, self.height));
        }
        for (name, p) in [("p_doppler", self.p_doppler), ("p_elastography", self.p_elastography)] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} = {p} is not a probability"));
            }
        }
        Ok(())
    }
}

/// Malignant lesion count for `n` lesions (half rounds away from zero).
pub fn malignant_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

struct Planned {
    patient: usize,
    ordinal: usize,
    label: Label,
}

fn rel_dir(patient: &str, lesion: &str, mode: Mode) -> String {
    format!("{patient}/{lesion}/{mode}")
}

/// Render the dataset into `out` and write its manifest. Output bytes are a
/// function of the config alone.
pub fn generate_dataset(config: &SynthConfig, out: &Path) -> Result<Manifest> {
    config.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = config.lesions_per_patient;
    let counts: Vec<usize> = (0..config.patients).map(|_| rng.random_range(lo..=hi)).collect();
    let total: usize = counts.iter().sum();
    let n_mal = malignant_count(total, config.malignant_fraction);
    let mut labels: Vec<Label> = (0..total)
        .map(|i| if i < n_mal { Label::Malignant } else { Label::Benign })
        .collect();
    labels.shuffle(&mut rng);

    let mut planned = Vec::with_capacity(total);
    for (p, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            let ordinal = planned.len();
            planned.push(Planned {
                patient: p,
                ordinal,
                label: labels[ordinal],
            });
        }
    }
    let lesions: Vec<LesionRecord> = planned
        .par_iter()
        .map(|pl| render_lesion(config, out, pl))
        .collect::<Result<_>>()?;

    let mut manifest = Manifest {
        patients: (0..config.patients)
            .map(|p| PatientRecord {
                id: patient_id(p),
                split: Split::Unassigned,
                lesions: Vec::new(),
            })
            .collect(),
    };
    for (pl, l) in planned.iter().zip(lesions) {
        manifest.patients[pl.patient].lesions.push(l);
    }
    if config.patients >= 2 {
        manifest = split_by_patient(&manifest, config.train_fraction, config.seed ^ 0x5eed_5e11)?;
    }
    manifest.write(out)?;
    Ok(manifest)
}

fn patient_id(p: usize) -> String {
    format!("P{p:03}")
}

fn render_lesion(config: &SynthConfig, out: &Path, pl: &Planned) -> Result<LesionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(pl.ordinal as u64 + 1);
    let id = format!("L{:04}", pl.ordinal);
    let pid = patient_id(pl.patient);
    let scene = render::LesionScene::new(config.width, config.height, pl.label, config.signal, &mut rng);
    let mut modes = vec![(Mode::Grayscale, config.duration)];
    let wants_doppler = rng.random_bool(config.p_doppler);
    let wants_elasto = rng.random_bool(config.p_elastography);
    if wants_doppler {
        modes.push((Mode::Doppler, config.duration));
    }
    if wants_elasto {
        modes.push((Mode::Elastography, config.elasto_duration));
    }
    let mut segments = Vec::new();
    for (mode, (a, b)) in modes {
        let secs = if b > a { rng.random_range(a..=b) } else { a };
        let n = ((secs * config.fps).round() as usize).max(1);
        let rel = rel_dir(&pid, &id, mode);
        let dir = out.join(&rel);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (i, f) in scene.render(mode, n, config.fps, &mut rng).iter().enumerate() {
            f.write_ppm(dir.join(frame_file_name(i)))?;
        }
        segments.push(SegmentEntry {
            mode,
            fps: config.fps,
            n_frames: n,
            rel_path: rel,
        });
    }
    Ok(LesionRecord {
        id,
        label: pl.label,
        segments,
    })
}

/// Mean over frames of the per-frame pixel intensity variance, averaged over
/// channels; the texture statistic the generator separates classes by.
pub fn frame_variance(frames: &[Frame]) -> f64 {
    let per_frame = |f: &Frame| {
        let d = f.data();
        let n = d.len() as f64;
        let mean = d.iter().map(|&v| v as f64).sum::<f64>() / n;
        d.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n
    };
    frames.iter().map(per_frame).sum::<f64>() / frames.len().max(1) as f64
}

/// Read every frame of a segment.
pub fn read_segment_frames(root: &Path, seg: &SegmentEntry) -> Result<Vec<Frame>> {
    let dir: PathBuf = root.join(&seg.rel_path);
    (0..seg.n_frames)
        .map(|i| Frame::read_ppm(dir.join(frame_file_name(i))))
        .collect()
}
