//! Choosing the elastography frames with the largest chromatic coverage.

use crate::error::{Error, Result};
use crate::tensor::Array;

use super::{coverage_area, ChromaThresholds, Frame, Mode, VideoSegment};

pub const MAX_ELASTO_IMAGES: usize = 3;

/// A selected elastography frame, or the zero matrix when none exists.
#[derive(Clone, Debug, PartialEq)]
pub struct ElastoImage {
    pub frame: Option<Frame>,
    pub frame_index: Option<usize>,
    pub coverage: f64,
}

impl ElastoImage {
    pub fn zero() -> Self {
        ElastoImage {
            frame: None,
            frame_index: None,
            coverage: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.frame.is_none()
    }

    /// `3×H×W` model input; the zero matrix when no frame was selected.
    pub fn to_array(&self, width: usize, height: usize) -> Result<Array<f32>> {
        match &self.frame {
            None => Ok(Array::zeros(&[3, height, width])),
            Some(f) if (f.width(), f.height()) == (width, height) => {
                Array::new(vec![3, height, width], f.data().to_vec())
            }
            Some(f) => Err(Error::shape(format!(
                "elastography frame is {}×{}, expected {width}×{height}",
                f.width(),
                f.height()
            ))),
        }
    }
}

/// Indices of the (at most `k`) largest scores, best first; ties go to the
/// earlier index.
pub fn rank_by_coverage(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps earlier frames ahead of equal scores
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order.truncate(k);
    order
}

/// The frames of an elastography segment with the three largest coverages.
pub fn select_elastography_frames(
    segment: &VideoSegment,
    thresholds: ChromaThresholds,
    crop: impl Fn(&Frame) -> Result<Frame>,
) -> Result<Vec<ElastoImage>> {
    if segment.mode != Mode::Elastography {
        return Err(Error::invalid(format!(
            "elastography selection on a {} segment of lesion {}",
            segment.mode, segment.lesion_id
        )));
    }
    let mut frames = Vec::with_capacity(segment.n_frames);
    let mut scores = Vec::with_capacity(segment.n_frames);
    for i in 0..segment.n_frames {
        let f = crop(&segment.read_frame(i)?)?;
        scores.push(coverage_area(&f, thresholds));
        frames.push(Some(f));
    }
    Ok(rank_by_coverage(&scores, MAX_ELASTO_IMAGES)
        .into_iter()
        .map(|i| ElastoImage {
            frame: frames[i].take(),
            frame_index: Some(i),
            coverage: scores[i],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_examples() {
        assert_eq!(rank_by_coverage(&[0.1, 0.5, 0.3, 0.7, 0.2], 3), vec![3, 1, 2]);
        assert_eq!(rank_by_coverage(&[0.2, 0.9], 3), vec![1, 0]);
        assert_eq!(rank_by_coverage(&[], 3), Vec::<usize>::new());
        assert_eq!(rank_by_coverage(&[0.4, 0.4, 0.4, 0.4], 3), vec![0, 1, 2]);
    }

    #[test]
    fn zero_matrix_when_absent() {
        let z = ElastoImage::zero().to_array(4, 2).unwrap();
        assert_eq!(z.shape(), &[3, 2, 4]);
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_mode_is_rejected() {
        let seg = VideoSegment {
            lesion_id: "L1".into(),
            patient_id: "P1".into(),
            mode: Mode::Doppler,
            fps: 4.0,
            n_frames: 0,
            dir: "nowhere".into(),
        };
        assert!(select_elastography_frames(&seg, ChromaThresholds::default(), |f| Ok(f.clone()))
            .is_err());
    }
}
