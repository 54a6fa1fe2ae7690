//! Clip segmentation and 4 Hz frame sampling.

use crate::error::{Error, Result};

use super::{Frame, VideoSegment};

pub const CLIP_SECONDS: f64 = 6.0;
pub const CLIP_OVERLAP: f64 = 0.5;
pub const SAMPLE_HZ: f64 = 4.0;
/// Frames stacked into one slice (6 s at 4 Hz).
pub const SLICE_FRAMES: usize = 24;

// durations and times come from frame counts divided by fps; a hair of slack
// keeps e.g. 12.000000000000002 s from losing its last clip
const EPS: f64 = 1e-9;

/// Half-open interval `[start, end)` in seconds from the segment start.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipInterval {
    pub start: f64,
    pub end: f64,
}

/// Number of full clips: `max(0, floor((d − len)/hop) + 1)`.
pub fn clip_count(duration: f64, clip_len: f64, overlap: f64) -> usize {
    let hop = clip_len * (1.0 - overlap);
    if !(duration + EPS >= clip_len) || hop <= 0.0 {
        return 0;
    }
    ((duration - clip_len) / hop + EPS).floor() as usize + 1
}

/// Clips starting at `0, hop, 2·hop, …`; trailing partial windows are dropped.
pub fn segment_clips(duration: f64, clip_len: f64, overlap: f64) -> Vec<ClipInterval> {
    let hop = clip_len * (1.0 - overlap);
    (0..clip_count(duration, clip_len, overlap))
        .map(|i| {
            let start = i as f64 * hop;
            ClipInterval {
                start,
                end: start + clip_len,
            }
        })
        .collect()
}

/// Frame indices `floor(t_k·fps + 0.5)` for `t_k = start + k/rate`.
pub fn sample_indices(
    start: f64,
    fps: f64,
    rate: f64,
    count: usize,
    n_frames: usize,
) -> Result<Vec<usize>> {
    if !(fps > 0.0) || !(rate > 0.0) {
        return Err(Error::invalid(format!("fps {fps} and rate {rate} must be positive")));
    }
    (0..count)
        .map(|k| {
            let t = start + k as f64 / rate;
            let i = (t * fps + 0.5 + EPS).floor() as usize;
            if i >= n_frames {
                Err(Error::invalid(format!(
                    "sample at {t:.3} s maps to frame {i}, beyond the {n_frames}-frame segment"
                )))
            } else {
                Ok(i)
            }
        })
        .collect()
}

/// The 24 frames of one clip, cropped.
pub fn sample_clip_frames(
    segment: &VideoSegment,
    clip: ClipInterval,
    rate: f64,
    crop: impl Fn(&Frame) -> Result<Frame>,
) -> Result<Vec<Frame>> {
    let count = ((clip.end - clip.start) * rate + EPS).floor() as usize;
    sample_indices(clip.start, segment.fps, rate, count, segment.n_frames)?
        .into_iter()
        .map(|i| crop(&segment.read_frame(i)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_counts() {
        let n = |d| clip_count(d, CLIP_SECONDS, CLIP_OVERLAP);
        assert_eq!(n(6.0), 1);
        assert_eq!(n(12.0), 3);
        assert_eq!(n(5.5), 0);
        assert_eq!(n(0.0), 0);
        assert_eq!(n(60.0), 19);
        let starts: Vec<f64> = segment_clips(12.0, 6.0, 0.5).iter().map(|c| c.start).collect();
        assert_eq!(starts, vec![0.0, 3.0, 6.0]);
        assert_eq!(segment_clips(6.0, 6.0, 0.5), vec![ClipInterval { start: 0.0, end: 6.0 }]);
    }

    #[test]
    fn sampling_rounds_to_nearest_index() {
        let at = |fps: f64| sample_indices(0.0, fps, SAMPLE_HZ, 24, (6.0 * fps) as usize).unwrap();
        assert_eq!(
            at(30.0),
            vec![
                0, 8, 15, 23, 30, 38, 45, 53, 60, 68, 75, 83, 90, 98, 105, 113, 120, 128, 135, 143,
                150, 158, 165, 173
            ]
        );
        assert_eq!(at(4.0), (0..24).collect::<Vec<_>>());
        assert_eq!(at(8.0), (0..24).map(|k| 2 * k).collect::<Vec<_>>());
        // corrupt metadata: frames run out before the clip ends
        assert!(sample_indices(0.0, 30.0, 4.0, 24, 100).is_err());
    }
}
