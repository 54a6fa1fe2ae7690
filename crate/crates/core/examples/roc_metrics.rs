//! Slice→lesion aggregation, strict 0.5 thresholding, ROC/AUC and the
//! metrics export, on hand-written predictions.

use ebus3d::metrics::{
    aggregate_all, metrics_csv, pairwise_auc, roc_of, Label, Level, MetricsRow, SlicePrediction,
};
use ebus3d::nets::ModelVariant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rows = [
        ("L1", 0.91, Label::Malignant),
        ("L1", 0.62, Label::Malignant),
        ("L1", 0.40, Label::Malignant),
        ("L2", 0.20, Label::Benign),
        ("L2", 0.55, Label::Benign),
        ("L3", 0.50, Label::Benign),
        ("L4", 0.48, Label::Malignant),
        ("L4", 0.70, Label::Malignant),
    ];
    let slices: Vec<SlicePrediction> = rows
        .iter()
        .map(|&(l, score, label)| SlicePrediction { lesion_id: l.into(), patient_id: "P1".into(), score, label })
        .collect();
    let lesions = aggregate_all(&slices)?;
    for l in &lesions {
        println!("{} mean {:.4} over {} slices -> {:?} (truth {:?})", l.lesion_id, l.mean_score, l.slices, l.predicted(), l.label);
    }

    let roc = roc_of(&slices)?;
    let scores: Vec<f64> = slices.iter().map(|s| s.score).collect();
    let labels: Vec<Label> = slices.iter().map(|s| s.label).collect();
    println!("\nslice ROC (trapezoid AUC {:.4}, Mann-Whitney {:.4}):", roc.auc(), pairwise_auc(&scores, &labels)?);
    print!("{}", roc.to_csv());

    let table = [
        MetricsRow::compute(Level::Slice, ModelVariant::UDE, &slices, 0.5)?,
        MetricsRow::compute(Level::Lesion, ModelVariant::UDE, &lesions, 0.5)?,
    ];
    print!("\n{}", metrics_csv(&table));
    Ok(())
}
