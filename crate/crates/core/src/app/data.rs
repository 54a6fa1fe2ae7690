//! Turning an `index.tsv` into model batches.

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::metrics::Label;
use crate::nets::{Batch, GraphicSignal, ModelVariant};
use crate::preproc::store::{read_elasto, read_slice};
use crate::preproc::{augment_slice, shuffle_frames, AugmentConfig, ElastoImage, Index, Mode};
use crate::synth::Split;
use crate::tensor::Array;

/// One slice a variant consumes, with everything needed to score it.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Position in the index's slice list; seeds per-slice randomness.
    pub ordinal: usize,
    pub path: PathBuf,
    pub lesion_id: String,
    pub patient_id: String,
    pub label: Label,
    pub mode: Mode,
    pub clip_start: f64,
    pub signal: GraphicSignal,
    /// Paired elastography image; `None` means the zero matrix.
    pub elasto: Option<PathBuf>,
}

pub fn consumes(variant: ModelVariant, mode: Mode) -> bool {
    match mode {
        Mode::Grayscale => true,
        Mode::Doppler => variant.uses_doppler(),
        Mode::Elastography => false,
    }
}

/// Slices of `split` that `variant` consumes, in index order. The `j`-th
/// slice of a lesion is paired with its elastography image `j mod k`.
pub fn samples(index: &Index, root: &Path, split: Split, variant: ModelVariant) -> Vec<Sample> {
    let mut out = Vec::new();
    for lesion in index.lesions.iter().filter(|l| l.split == split) {
        let elasto: Vec<&str> = index.elasto_for(&lesion.lesion_id).map(|e| e.path.as_str()).collect();
        let mut j = 0;
        for (ordinal, s) in index.slices.iter().enumerate() {
            if s.lesion_id != lesion.lesion_id || !consumes(variant, s.mode) {
                continue;
            }
            out.push(Sample {
                ordinal,
                path: root.join(&s.path),
                lesion_id: s.lesion_id.clone(),
                patient_id: lesion.patient_id.clone(),
                label: lesion.label,
                mode: s.mode,
                clip_start: s.clip_start,
                signal: s.signal,
                elasto: (!elasto.is_empty()).then(|| root.join(elasto[j % elasto.len()])),
            });
            j += 1;
        }
    }
    out
}

/// How slices are altered on load.
#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions<'a> {
    /// Augment with `(config, sample index)`.
    pub augment: Option<(&'a AugmentConfig, u64)>,
    /// Permute frames with this seed (stream = sample ordinal).
    pub shuffle_seed: Option<u64>,
}

/// Read and stack `samples` into one batch shaped for `variant`.
pub fn load_batch(samples: &[&Sample], variant: ModelVariant, opts: LoadOptions<'_>) -> Result<Batch<f32>> {
    let mut volumes = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let mut slice = read_slice(&s.path)?;
        if let Some(seed) = opts.shuffle_seed {
            slice = shuffle_frames(&slice, seed, s.ordinal as u64);
        }
        if let Some((cfg, base)) = opts.augment {
            slice = augment_slice(&slice, cfg, base + i as u64);
        }
        volumes.push(slice.volume);
    }
    let refs: Vec<&Array<f32>> = volumes.iter().collect();
    let mut batch = Batch::new(Array::stack(&refs)?);
    if variant.uses_signal() {
        batch = batch.with_signals(samples.iter().map(|s| s.signal).collect());
    }
    if variant.uses_elastography() {
        let (h, w) = (batch.volumes.shape()[3], batch.volumes.shape()[4]);
        let images = samples
            .iter()
            .map(|s| match &s.elasto {
                Some(p) => read_elasto(p)?.to_array(w, h),
                None => ElastoImage::zero().to_array(w, h),
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Array<f32>> = images.iter().collect();
        batch = batch.with_elasto(Array::stack(&refs)?);
    }
    Ok(batch)
}
