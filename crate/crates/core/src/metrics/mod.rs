//! Slice- and lesion-level evaluation: the 0.5 threshold, lesion score
//! averaging, accuracy, ROC/AUC, grayscale-only exclusions and CSV export.

pub mod roc;

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nets::ModelVariant;
use crate::preproc::LesionEntry;

pub use roc::{auc, pairwise_auc, roc_curve, RocCurve};

/// Scores strictly above this are malignant.
pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Benign,
    Malignant,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Benign),
            1 => Some(Label::Malignant),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn is_malignant(self) -> bool {
        self == Label::Malignant
    }

    /// BCE target.
    pub fn target(self) -> f64 {
        self.as_u8() as f64
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Benign => "benign",
            Label::Malignant => "malignant",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "0" | "benign" => Ok(Label::Benign),
            "1" | "malignant" => Ok(Label::Malignant),
            other => Err(Error::invalid(format!("label {other:?} is neither 0 nor 1"))),
        }
    }
}

pub fn classify(score: f64) -> Label {
    classify_at(score, THRESHOLD)
}

pub fn classify_at(score: f64, threshold: f64) -> Label {
    if score > threshold {
        Label::Malignant
    } else {
        Label::Benign
    }
}

/// A score paired with its ground truth.
pub trait Scored {
    fn score(&self) -> f64;
    fn label(&self) -> Label;
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlicePrediction {
    pub lesion_id: String,
    pub patient_id: String,
    pub score: f64,
    pub label: Label,
}

impl Scored for SlicePrediction {
    fn score(&self) -> f64 {
        self.score
    }

    fn label(&self) -> Label {
        self.label
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LesionPrediction {
    pub lesion_id: String,
    pub mean_score: f64,
    pub slices: usize,
    pub label: Label,
}

impl LesionPrediction {
    pub fn predicted(&self) -> Label {
        classify(self.mean_score)
    }
}

impl Scored for LesionPrediction {
    fn score(&self) -> f64 {
        self.mean_score
    }

    fn label(&self) -> Label {
        self.label
    }
}

/// Unweighted mean over the slices of one lesion.
pub fn aggregate_lesion(slices: &[SlicePrediction]) -> Result<LesionPrediction> {
    let first = slices
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate a lesion without slices"))?;
    if let Some(other) = slices.iter().find(|s| s.lesion_id != first.lesion_id) {
        return Err(Error::invalid(format!(
            "mixed lesion ids {} and {} in one aggregate",
            first.lesion_id, other.lesion_id
        )));
    }
    if slices.iter().any(|s| s.label != first.label) {
        return Err(Error::invalid(format!("lesion {} has conflicting labels", first.lesion_id)));
    }
    let mean = slices.iter().map(|s| s.score).sum::<f64>() / slices.len() as f64;
    Ok(LesionPrediction {
        lesion_id: first.lesion_id.clone(),
        mean_score: mean,
        slices: slices.len(),
        label: first.label,
    })
}

/// One aggregate per lesion, in order of first appearance.
pub fn aggregate_all(slices: &[SlicePrediction]) -> Result<Vec<LesionPrediction>> {
    let mut ids: Vec<&str> = Vec::new();
    for s in slices {
        if !ids.contains(&s.lesion_id.as_str()) {
            ids.push(&s.lesion_id);
        }
    }
    ids.into_iter()
        .map(|id| {
            let group: Vec<SlicePrediction> =
                slices.iter().filter(|s| s.lesion_id == id).cloned().collect();
            aggregate_lesion(&group)
        })
        .collect()
}

/// Fraction classified correctly at the 0.5 threshold.
pub fn accuracy<P: Scored>(predictions: &[P]) -> Result<f64> {
    accuracy_at(predictions, THRESHOLD)
}

pub fn accuracy_at<P: Scored>(predictions: &[P], threshold: f64) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::invalid("accuracy of an empty prediction set"));
    }
    let correct = predictions
        .iter()
        .filter(|p| classify_at(p.score(), threshold) == p.label())
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

pub fn roc_of<P: Scored>(predictions: &[P]) -> Result<RocCurve> {
    let scores: Vec<f64> = predictions.iter().map(Scored::score).collect();
    let labels: Vec<Label> = predictions.iter().map(Scored::label).collect();
    roc_curve(&scores, &labels)
}

/// Does a lesion have anything `variant` can score?
pub fn usable_for(lesion: &LesionEntry, variant: ModelVariant) -> bool {
    match variant {
        ModelVariant::U => lesion.grayscale_slices > 0,
        _ => lesion.grayscale_slices + lesion.doppler_slices > 0,
    }
}

/// Drop lesions `variant` cannot be evaluated on: no grayscale clip for U;
/// no clip in any consumed mode otherwise.
pub fn apply_exclusions(lesions: &[LesionEntry], variant: ModelVariant) -> Vec<LesionEntry> {
    lesions
        .iter()
        .filter(|l| usable_for(l, variant))
        .cloned()
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Slice,
    Lesion,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Level::Slice => "slice",
            Level::Lesion => "lesion",
        })
    }
}

/// One row of the metrics export.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub level: Level,
    pub model: ModelVariant,
    pub accuracy: f64,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
    pub n: usize,
}

impl MetricsRow {
    pub fn compute<P: Scored>(
        level: Level,
        model: ModelVariant,
        predictions: &[P],
        threshold: f64,
    ) -> Result<Self> {
        Ok(MetricsRow {
            level,
            model,
            accuracy: accuracy_at(predictions, threshold)?,
            auc: roc_of(predictions).ok().map(|c| c.auc()),
            n: predictions.len(),
        })
    }
}

pub const METRICS_HEADER: &str = "level,model,accuracy,auc,n";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        let auc = r.auc.map_or_else(|| "nan".to_string(), |a| format!("{a:.6}"));
        let _ = writeln!(s, "{},{},{:.6},{},{}", r.level, r.model, r.accuracy, auc, r.n);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Split;

    fn sp(lesion: &str, score: f64, label: u8) -> SlicePrediction {
        SlicePrediction {
            lesion_id: lesion.into(),
            patient_id: "P".into(),
            score,
            label: Label::from_u8(label).unwrap(),
        }
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(classify(0.51), Label::Malignant);
        assert_eq!(classify(0.5), Label::Benign);
        assert_eq!(classify(0.0), Label::Benign);
    }

    #[test]
    fn lesion_means() {
        let l = aggregate_lesion(&[sp("A", 0.4, 1), sp("A", 0.8, 1)]).unwrap();
        assert!((l.mean_score - 0.6).abs() < 1e-12);
        assert_eq!(l.predicted(), Label::Malignant);
        assert_eq!(aggregate_lesion(&[sp("A", 0.5, 1)]).unwrap().predicted(), Label::Benign);
        assert_eq!(aggregate_lesion(&vec![sp("A", 0.0, 0); 3]).unwrap().predicted(), Label::Benign);
        assert!(aggregate_lesion(&[]).is_err());
        assert!(aggregate_lesion(&[sp("A", 0.1, 0), sp("B", 0.1, 0)]).is_err());
        let all = aggregate_all(&[sp("B", 0.9, 1), sp("A", 0.1, 0), sp("B", 0.7, 1)]).unwrap();
        assert_eq!(all.iter().map(|l| l.lesion_id.as_str()).collect::<Vec<_>>(), ["B", "A"]);
        assert_eq!(all[0].slices, 2);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[sp("A", 0.9, 1), sp("B", 0.1, 0)]).unwrap(), 1.0);
        assert_eq!(accuracy(&[sp("A", 0.9, 1), sp("B", 0.9, 0)]).unwrap(), 0.5);
        assert!(accuracy::<SlicePrediction>(&[]).is_err());
        // the validation mix of 27 benign and 23 malignant lesions
        let mut mix: Vec<_> = (0..27).map(|i| sp(&format!("b{i}"), 0.0, 0)).collect();
        mix.extend((0..23).map(|i| sp(&format!("m{i}"), 0.0, 1)));
        assert_eq!(accuracy(&mix).unwrap(), 0.54);
    }

    fn entry(g: usize, d: usize) -> LesionEntry {
        LesionEntry {
            lesion_id: "L".into(),
            patient_id: "P".into(),
            split: Split::Validation,
            label: Label::Benign,
            grayscale_slices: g,
            doppler_slices: d,
            elasto_images: 0,
        }
    }

    #[test]
    fn exclusions() {
        let short = entry(0, 0);
        let with_doppler = entry(0, 1);
        assert!(apply_exclusions(&[short.clone()], ModelVariant::U).is_empty());
        assert!(apply_exclusions(&[with_doppler.clone()], ModelVariant::U).is_empty());
        assert_eq!(apply_exclusions(&[with_doppler.clone()], ModelVariant::UD), vec![with_doppler]);
        let ok = vec![entry(1, 0), entry(3, 2)];
        assert_eq!(apply_exclusions(&ok, ModelVariant::U), ok);
    }

    #[test]
    fn csv_layout() {
        let preds = [sp("A", 0.9, 1), sp("B", 0.2, 0), sp("C", 0.6, 0)];
        let rows = [
            MetricsRow::compute(Level::Slice, ModelVariant::UD, &preds, THRESHOLD).unwrap(),
            MetricsRow::compute(Level::Lesion, ModelVariant::UD, &preds[..1], THRESHOLD).unwrap(),
        ];
        assert_eq!(
            metrics_csv(&rows),
            "level,model,accuracy,auc,n\n\
             slice,Res3D_UD,0.666667,1.000000,3\n\
             lesion,Res3D_UD,1.000000,nan,1\n"
        );
    }
}
