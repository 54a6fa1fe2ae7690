//! Scoring slices, aggregating lesions and exporting the metric files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::{
    aggregate_all, apply_exclusions, metrics_csv, roc_of, Level, LesionPrediction, MetricsRow,
    SlicePrediction,
};
use crate::nets::Res3dNet;
use crate::preproc::Index;
use crate::synth::Split;
use crate::tensor::no_grad;

use super::data::{load_batch, samples, LoadOptions, Sample};

pub const METRICS_FILE: &str = "metrics.csv";
pub const ROC_SLICE_FILE: &str = "roc_slice.csv";
pub const ROC_LESION_FILE: &str = "roc_lesion.csv";
pub const SLICE_SCORES_FILE: &str = "slice_scores.tsv";
pub const LESION_SCORES_FILE: &str = "lesion_scores.tsv";

/// Inference-mode scores for `samples`, `micro_batch` at a time.
pub fn predict(
    model: &Res3dNet<f32>,
    samples: &[Sample],
    micro_batch: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<SlicePrediction>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(micro_batch.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let opts = LoadOptions { augment: None, shuffle_seed };
        let batch = load_batch(&refs, model.variant(), opts)?;
        let scores = no_grad(|| model.forward(&batch, false))?;
        for (s, &p) in chunk.iter().zip(scores.value().data()) {
            out.push(SlicePrediction {
                lesion_id: s.lesion_id.clone(),
                patient_id: s.patient_id.clone(),
                score: p as f64,
                label: s.label,
            });
        }
    }
    Ok(out)
}

/// Everything an evaluation produces.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub slices: Vec<SlicePrediction>,
    pub lesions: Vec<LesionPrediction>,
    pub rows: Vec<MetricsRow>,
}

impl Evaluation {
    pub fn row(&self, level: Level) -> &MetricsRow {
        self.rows.iter().find(|r| r.level == level).expect("both levels computed")
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{:<7} {:<10} {:>9} {:>7} {:>5}\n", "level", "model", "accuracy", "auc", "n");
        for r in &self.rows {
            let auc = r.auc.map_or_else(|| "nan".into(), |a| format!("{a:.4}"));
            let _ = writeln!(s, "{:<7} {:<10} {:>9.4} {:>7} {:>5}", r.level, r.model.name(), r.accuracy, auc, r.n);
        }
        s
    }

    /// Write metrics, both ROC curves and both score dumps into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut slice_tsv = String::from("lesion_id\tpatient_id\tlabel\tscore\n");
        for p in &self.slices {
            let _ = writeln!(slice_tsv, "{}\t{}\t{}\t{:.9}", p.lesion_id, p.patient_id, p.label.as_u8(), p.score);
        }
        let mut lesion_tsv = String::from("lesion_id\tlabel\tslices\tmean_score\tpredicted\n");
        for l in &self.lesions {
            let _ = writeln!(
                lesion_tsv,
                "{}\t{}\t{}\t{:.9}\t{}",
                l.lesion_id,
                l.label.as_u8(),
                l.slices,
                l.mean_score,
                l.predicted().as_u8()
            );
        }
        let roc = |curve: Result<_>| curve.map_or_else(|_| "fpr,tpr\n".to_string(), |c: crate::metrics::RocCurve| c.to_csv());
        let files = [
            (METRICS_FILE, metrics_csv(&self.rows)),
            (ROC_SLICE_FILE, roc(roc_of(&self.slices))),
            (ROC_LESION_FILE, roc(roc_of(&self.lesions))),
            (SLICE_SCORES_FILE, slice_tsv),
            (LESION_SCORES_FILE, lesion_tsv),
        ];
        files
            .into_iter()
            .map(|(name, text)| {
                let path = dir.join(name);
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
                Ok(path)
            })
            .collect()
    }
}

/// Score `split` of a preprocessed dataset. Lesions the model's variant
/// cannot use are excluded before anything is counted.
pub fn evaluate(
    model: &Res3dNet<f32>,
    index: &Index,
    root: &Path,
    split: Split,
    threshold: f64,
    micro_batch: usize,
    shuffle_seed: Option<u64>,
) -> Result<Evaluation> {
    let variant = model.variant();
    let kept = apply_exclusions(&index.lesions, variant);
    let chosen: Vec<Sample> = samples(index, root, split, variant)
        .into_iter()
        .filter(|s| kept.iter().any(|l| l.lesion_id == s.lesion_id))
        .collect();
    if chosen.is_empty() {
        return Err(Error::Variant {
            variant: variant.name(),
            detail: format!("has no usable {split} slices in this dataset"),
        });
    }
    let slices = predict(model, &chosen, micro_batch, shuffle_seed)?;
    let lesions = aggregate_all(&slices)?;
    let rows = vec![
        MetricsRow::compute(Level::Slice, variant, &slices, threshold)?,
        MetricsRow::compute(Level::Lesion, variant, &lesions, threshold)?,
    ];
    Ok(Evaluation { slices, lesions, rows })
}
