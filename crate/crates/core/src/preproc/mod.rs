//! From mode-tagged frame sequences to model-ready slices: cropping, clip
//! segmentation, 4 Hz sampling, elastography selection, graphic signals and
//! training-time augmentation.

pub mod augment;
pub mod clips;
pub mod elasto;
pub mod frame;
pub mod pipeline;
pub mod store;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nets::GraphicSignal;
use crate::tensor::Array;

pub use augment::{augment_slice, shuffle_frames, AugmentConfig, AugmentPlan};
pub use clips::{
    clip_count, sample_clip_frames, sample_indices, segment_clips, ClipInterval, CLIP_OVERLAP,
    CLIP_SECONDS, SAMPLE_HZ, SLICE_FRAMES,
};
pub use elasto::{rank_by_coverage, select_elastography_frames, ElastoImage, MAX_ELASTO_IMAGES};
pub use frame::{coverage_area, crop_frame, ChromaThresholds, Frame, CROP_HEIGHT, CROP_WIDTH};
pub use pipeline::{preprocess_dataset, PreprocessConfig};
pub use store::{Index, LesionEntry, SliceEntry, ElastoEntry, INDEX_FILE, INDEX_HEADER};

/// EBUS imaging mode of a recorded segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Grayscale,
    Doppler,
    Elastography,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Grayscale, Mode::Doppler, Mode::Elastography];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Grayscale => "grayscale",
            Mode::Doppler => "doppler",
            Mode::Elastography => "elastography",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown EBUS mode {s:?}")))
    }
}

/// `[1,0,e]` for grayscale slices, `[0,1,e]` for Doppler ones.
pub fn build_graphic_signal(mode: Mode, has_elastography: bool) -> Result<GraphicSignal> {
    match mode {
        Mode::Grayscale => Ok(GraphicSignal::grayscale(has_elastography)),
        Mode::Doppler => Ok(GraphicSignal::doppler(has_elastography)),
        Mode::Elastography => Err(Error::invalid(
            "elastography segments are single images, not 3D slice sources",
        )),
    }
}

/// Frames of one lesion recorded in one mode, stored as
/// `frame_%06d.ppm` files in `dir`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoSegment {
    pub lesion_id: String,
    pub patient_id: String,
    pub mode: Mode,
    pub fps: f64,
    pub n_frames: usize,
    pub dir: PathBuf,
}

impl VideoSegment {
    pub fn duration(&self) -> f64 {
        self.n_frames as f64 / self.fps
    }

    /// Timestamp of frame `i` relative to the segment start.
    pub fn timestamp(&self, i: usize) -> f64 {
        i as f64 / self.fps
    }

    pub fn frame_path(&self, i: usize) -> PathBuf {
        self.dir.join(frame_file_name(i))
    }

    pub fn read_frame(&self, i: usize) -> Result<Frame> {
        if i >= self.n_frames {
            return Err(Error::invalid(format!(
                "frame {i} requested from a {}-frame segment of lesion {}",
                self.n_frames, self.lesion_id
            )));
        }
        Frame::read_ppm(self.frame_path(i))
    }
}

pub fn frame_file_name(i: usize) -> String {
    format!("frame_{i:06}.ppm")
}

/// One model input: a `3×24×H×W` volume plus its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub volume: Array<f32>,
    pub signal: GraphicSignal,
    pub mode: Mode,
    pub lesion_id: String,
    pub clip_start: f64,
}

impl Slice {
    /// Stack equally sized frames along the time axis.
    pub fn stack(
        frames: &[Frame],
        signal: GraphicSignal,
        mode: Mode,
        lesion_id: impl Into<String>,
        clip_start: f64,
    ) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid("a slice needs at least one frame"))?;
        let (w, h, t) = (first.width(), first.height(), frames.len());
        let plane = w * h;
        let mut data = vec![0.0f32; 3 * t * plane];
        for (k, f) in frames.iter().enumerate() {
            if (f.width(), f.height()) != (w, h) {
                return Err(Error::shape("frames of one slice differ in size"));
            }
            for c in 0..3 {
                let dst = (c * t + k) * plane;
                data[dst..dst + plane].copy_from_slice(&f.data()[c * plane..(c + 1) * plane]);
            }
        }
        Ok(Slice {
            volume: Array::new(vec![3, t, h, w], data)?,
            signal,
            mode,
            lesion_id: lesion_id.into(),
            clip_start,
        })
    }

    pub fn frames(&self) -> usize {
        self.volume.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.volume.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.volume.shape()[3]
    }

    /// Frame `k` of the volume.
    pub fn frame(&self, k: usize) -> Frame {
        let (t, plane) = (self.frames(), self.width() * self.height());
        let d = self.volume.data();
        let mut data = Vec::with_capacity(3 * plane);
        for c in 0..3 {
            let src = (c * t + k) * plane;
            data.extend_from_slice(&d[src..src + plane]);
        }
        Frame::new(self.width(), self.height(), data).expect("slice frame extents")
    }
}
