//! Clip counts, 4 Hz sampling indices, augmentation statistics and split
//! invariants.

use ebus3d::metrics::Label;
use ebus3d::nets::GraphicSignal;
use ebus3d::preproc::{
    augment_slice, clip_count, sample_indices, segment_clips, AugmentConfig, Frame, Mode, Slice,
    CLIP_OVERLAP, CLIP_SECONDS, SAMPLE_HZ, SLICE_FRAMES,
};
use ebus3d::synth::manifest::{split_by_patient, LesionRecord, Manifest, PatientRecord};
use ebus3d::synth::Split;
use proptest::prelude::*;

#[test]
fn clip_counts_follow_the_hop_formula() {
    for (d, want) in [(0.0, 0), (5.9, 0), (6.0, 1), (9.0, 2), (12.0, 3), (60.0, 19)] {
        assert_eq!(clip_count(d, CLIP_SECONDS, CLIP_OVERLAP), want, "duration {d}");
    }
    // durations reconstructed from frame counts keep their last clip
    assert_eq!(clip_count(300.0 / 25.0, CLIP_SECONDS, CLIP_OVERLAP), 3);
    assert_eq!(clip_count(12.0 * 30.0 / 30.0, CLIP_SECONDS, CLIP_OVERLAP), 3);
}

/// `floor(t·fps + ½)` for `t = start + k/4`, in exact integer arithmetic:
/// `floor(((4·start + k)·fps + 2) / 4)`.
fn exact_indices(start_s: usize, fps: usize) -> Vec<usize> {
    (0..SLICE_FRAMES).map(|k| ((4 * start_s + k) * fps + 2) / 4).collect()
}

#[test]
fn sampled_indices_match_round_half_up() {
    for fps in [4usize, 8, 25, 30] {
        for clip in segment_clips(12.0, CLIP_SECONDS, CLIP_OVERLAP) {
            let got = sample_indices(clip.start, fps as f64, SAMPLE_HZ, SLICE_FRAMES, 12 * fps).unwrap();
            assert_eq!(got, exact_indices(clip.start as usize, fps), "fps {fps} start {}", clip.start);
        }
    }
    assert_eq!(
        sample_indices(0.0, 25.0, SAMPLE_HZ, 8, 300).unwrap(),
        vec![0, 6, 13, 19, 25, 31, 38, 44]
    );
    assert_eq!(
        sample_indices(0.0, 30.0, SAMPLE_HZ, 6, 300).unwrap(),
        vec![0, 8, 15, 23, 30, 38]
    );
    // an index past the end of the segment is an error, not a clamp
    assert!(sample_indices(3.0, 4.0, SAMPLE_HZ, SLICE_FRAMES, 35).is_err());
}

#[test]
fn noise_has_the_configured_spread_at_full_resolution() {
    let frames = vec![Frame::filled(704, 576, [0.5, 0.5, 0.5]); SLICE_FRAMES];
    let s = Slice::stack(&frames, GraphicSignal::grayscale(false), Mode::Grayscale, "L", 0.0).unwrap();
    let cfg = AugmentConfig { p_noise: 1.0, ..AugmentConfig::disabled() };
    let noisy = augment_slice(&s, &cfg, 0);
    let d: Vec<f64> = noisy.volume.data().iter().map(|&v| v as f64 - 0.5).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
    println!("noise over {} voxels: mean {mean:.2e}, std {std:.6}", d.len());
    assert!(mean.abs() < 1e-4);
    assert!((std - 0.01).abs() < 1e-4, "std {std}");
}

fn manifest(labels: &[Label]) -> Manifest {
    Manifest {
        patients: labels
            .iter()
            .enumerate()
            .map(|(i, &label)| PatientRecord {
                id: format!("P{i:03}"),
                split: Split::Unassigned,
                lesions: vec![LesionRecord { id: format!("L{i:04}"), label, segments: vec![] }],
            })
            .collect(),
    }
}

proptest! {
    #[test]
    fn clip_count_is_monotone_and_closed_form(d in 0.0f64..600.0) {
        let n = clip_count(d, CLIP_SECONDS, CLIP_OVERLAP);
        let want = if d < 6.0 { 0 } else { ((d - 6.0) / 3.0).floor() as usize + 1 };
        prop_assert!(n == want || (d - 6.0) % 3.0 > 3.0 - 1e-8);
        prop_assert!(clip_count(d + 3.0, CLIP_SECONDS, CLIP_OVERLAP) == n + 1 || d < 3.0);
        for c in segment_clips(d, CLIP_SECONDS, CLIP_OVERLAP) {
            prop_assert!(c.end <= d + 1e-9);
        }
    }

    #[test]
    fn sampled_indices_are_increasing_and_in_range(fps in 4.0f64..60.0, clips in 1usize..8) {
        let d = 6.0 + 3.0 * (clips - 1) as f64;
        let n_frames = (d * fps).floor() as usize;
        for c in segment_clips(n_frames as f64 / fps, CLIP_SECONDS, CLIP_OVERLAP) {
            let idx = sample_indices(c.start, fps, SAMPLE_HZ, SLICE_FRAMES, n_frames).unwrap();
            prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(*idx.last().unwrap() < n_frames);
        }
    }

    #[test]
    fn augmentation_is_pure_and_bounded(seed in any::<u64>(), index in any::<u64>()) {
        let frames: Vec<Frame> = (0..3)
            .map(|k| Frame::from_fn(9, 7, |x, y| [((x + y + k) % 5) as f32 / 4.0, 0.5, 1.0]))
            .collect();
        let s = Slice::stack(&frames, GraphicSignal::grayscale(false), Mode::Grayscale, "L", 0.0).unwrap();
        let cfg = AugmentConfig { p_flip: 0.5, p_noise: 0.5, p_blur: 0.5, seed, ..AugmentConfig::default() };
        let a = augment_slice(&s, &cfg, index);
        prop_assert_eq!(&a, &augment_slice(&s, &cfg, index));
        prop_assert!(a.volume.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(a.volume.shape(), s.volume.shape());
    }

    #[test]
    fn patient_split_is_disjoint_and_two_class(
        bits in prop::collection::vec(any::<bool>(), 4..30), seed in any::<u64>()
    ) {
        let labels: Vec<Label> = bits.iter().map(|&b| if b { Label::Malignant } else { Label::Benign }).collect();
        let m = split_by_patient(&manifest(&labels), 0.7, seed).unwrap();
        let train = m.patients.iter().filter(|p| p.split == Split::Train).count();
        prop_assert!(train >= 1 && train < labels.len());
        prop_assert!(m.patients.iter().all(|p| p.split != Split::Unassigned));
        let both = |split: Split| {
            let ls: Vec<Label> = m.patients.iter().filter(|p| p.split == split).flat_map(|p| p.lesions.iter().map(|l| l.label)).collect();
            ls.contains(&Label::Benign) && ls.contains(&Label::Malignant)
        };
        let b = labels.iter().filter(|l| !l.is_malignant()).count();
        // feasible: each class and each side has at least two patients
        if b >= 2 && labels.len() - b >= 2 && train >= 2 && labels.len() - train >= 2 {
            prop_assert!(both(Split::Train) && both(Split::Validation));
        }
    }
}
