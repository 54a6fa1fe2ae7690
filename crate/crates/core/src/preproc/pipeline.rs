//! Whole-dataset preprocessing: manifest in, slice files and `index.tsv` out.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::synth::{Manifest, PatientRecord, LesionRecord};

use super::store::{write_elasto, write_slice, ElastoEntry, Index, LesionEntry, SliceEntry};
use super::{
    build_graphic_signal, crop_frame, sample_clip_frames, segment_clips, select_elastography_frames,
    ChromaThresholds, Frame, Mode, Slice, CLIP_OVERLAP, CLIP_SECONDS, CROP_HEIGHT, CROP_WIDTH,
    SAMPLE_HZ,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreprocessConfig {
    pub crop_origin: (usize, usize),
    /// `(width, height)`.
    pub crop_size: (usize, usize),
    pub clip_seconds: f64,
    pub overlap: f64,
    pub sample_hz: f64,
    pub chroma: ChromaThresholds,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            crop_origin: (0, 0),
            crop_size: (CROP_WIDTH, CROP_HEIGHT),
            clip_seconds: CLIP_SECONDS,
            overlap: CLIP_OVERLAP,
            sample_hz: SAMPLE_HZ,
            chroma: ChromaThresholds::default(),
        }
    }
}

impl PreprocessConfig {
    pub fn crop(&self, raw: &Frame) -> Result<Frame> {
        crop_frame(raw, self.crop_origin, self.crop_size)
    }
}

struct LesionOutput {
    entry: LesionEntry,
    slices: Vec<SliceEntry>,
    elasto: Vec<ElastoEntry>,
}

/// Preprocess every lesion of the manifest at `manifest_path` into `out`.
/// Lesions run in parallel; each writes only its own files, so the result
/// does not depend on scheduling.
pub fn preprocess_dataset(manifest_path: &Path, out: &Path, config: &PreprocessConfig) -> Result<Index> {
    let manifest = Manifest::read(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    for sub in ["slices", "elasto"] {
        let d = out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let work: Vec<(&PatientRecord, &LesionRecord)> = manifest.lesions().collect();
    let done: Vec<LesionOutput> = work
        .par_iter()
        .map(|&(p, l)| preprocess_lesion(root, out, p, l, config))
        .collect::<Result<_>>()?;
    let mut index = Index::default();
    for d in done {
        index.lesions.push(d.entry);
        index.slices.extend(d.slices);
        index.elasto.extend(d.elasto);
    }
    index.write(out)?;
    Ok(index)
}

fn preprocess_lesion(
    root: &Path,
    out: &Path,
    patient: &PatientRecord,
    lesion: &LesionRecord,
    config: &PreprocessConfig,
) -> Result<LesionOutput> {
    let crop = |f: &Frame| config.crop(f);
    let mut elasto = Vec::new();
    if let Some(seg) = lesion.segment(Mode::Elastography) {
        let segment = Manifest::video_segment(root, patient, lesion, seg);
        for (r, image) in select_elastography_frames(&segment, config.chroma, crop)?
            .into_iter()
            .enumerate()
        {
            let rel = format!("elasto/{}_{r}.f32", lesion.id);
            write_elasto(&out.join(&rel), &lesion.id, &image)?;
            elasto.push(ElastoEntry {
                lesion_id: lesion.id.clone(),
                split: patient.split,
                frame_index: image.frame_index.unwrap_or(0),
                coverage: image.coverage,
                path: rel,
            });
        }
    }
    let has_elasto = !elasto.is_empty();
    let mut slices = Vec::new();
    let mut counts = [0usize; 2];
    for (mi, mode) in [Mode::Grayscale, Mode::Doppler].into_iter().enumerate() {
        let Some(seg) = lesion.segment(mode) else { continue };
        let segment = Manifest::video_segment(root, patient, lesion, seg);
        let signal = build_graphic_signal(mode, has_elasto)?;
        for (k, clip) in segment_clips(segment.duration(), config.clip_seconds, config.overlap)
            .into_iter()
            .enumerate()
        {
            let frames = sample_clip_frames(&segment, clip, config.sample_hz, crop)?;
            let slice = Slice::stack(&frames, signal, mode, &lesion.id, clip.start)?;
            let rel = format!("slices/{}_{mode}_{k:03}.f32", lesion.id);
            write_slice(&out.join(&rel), &slice)?;
            slices.push(SliceEntry {
                lesion_id: lesion.id.clone(),
                split: patient.split,
                mode,
                clip_start: clip.start,
                signal,
                path: rel,
            });
            counts[mi] += 1;
        }
    }
    Ok(LesionOutput {
        entry: LesionEntry {
            lesion_id: lesion.id.clone(),
            patient_id: patient.id.clone(),
            split: patient.split,
            label: lesion.label,
            grayscale_slices: counts[0],
            doppler_slices: counts[1],
            elasto_images: elasto.len(),
        },
        slices,
        elasto,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, SynthConfig};

    #[test]
    fn small_dataset_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            patients: 2,
            lesions_per_patient: (1, 1),
            width: 24,
            height: 16,
            fps: 4.0,
            duration: (6.0, 9.5),
            elasto_duration: (0.5, 1.0),
            p_doppler: 1.0,
            p_elastography: 1.0,
            seed: 4,
            ..SynthConfig::default()
        };
        let m = generate_dataset(&cfg, &dir.path().join("data")).unwrap();
        let pcfg = PreprocessConfig {
            crop_size: (20, 16),
            crop_origin: (2, 0),
            ..Default::default()
        };
        let out = dir.path().join("pre");
        let index = preprocess_dataset(&dir.path().join("data/manifest.tsv"), &out, &pcfg).unwrap();
        assert_eq!(index.lesions.len(), m.lesion_count());
        for l in &index.lesions {
            assert!(l.grayscale_slices >= 1 && l.doppler_slices >= 1);
            assert!(l.elasto_images >= 1 && l.elasto_images <= 3);
        }
        let s = super::super::store::read_slice(&out.join(&index.slices[0].path)).unwrap();
        assert_eq!(s.volume.shape(), &[3, 24, 16, 20]);
        assert!(s.signal.has_elastography());
        let again = preprocess_dataset(&dir.path().join("data/manifest.tsv"), &out, &pcfg).unwrap();
        assert_eq!(again.to_tsv(), index.to_tsv());
    }
}
