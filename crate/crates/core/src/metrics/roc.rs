//! ROC curves by threshold sweep and their trapezoidal area.

use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::Label;

/// `(fpr, tpr)` points from (0,0) to (1,1) in sweep order.
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

impl RocCurve {
    pub fn auc(&self) -> f64 {
        auc(self)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("fpr,tpr\n");
        for (x, y) in &self.points {
            let _ = writeln!(s, "{x},{y}");
        }
        s
    }
}

fn class_counts(labels: &[Label]) -> (usize, usize) {
    let pos = labels.iter().filter(|l| l.is_malignant()).count();
    (pos, labels.len() - pos)
}

/// Sweep every distinct score from high to low; tied scores move the curve
/// in one (possibly diagonal) step.
pub fn roc_curve(scores: &[f64], labels: &[Label]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let (p, n) = class_counts(labels);
    if p == 0 || n == 0 {
        return Err(Error::invalid("ROC undefined: both classes must be present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]].is_malignant() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    Ok(RocCurve { points })
}

/// Trapezoidal integral of TPR over FPR.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Probability that a random malignant case outscores a random benign one,
/// ties counting one half (the Mann–Whitney U statistic over `P·N`).
pub fn pairwise_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (p, n) = class_counts(labels);
    if p == 0 || n == 0 || scores.len() != labels.len() {
        return Err(Error::invalid("pairwise AUC needs both classes and matching lengths"));
    }
    let mut wins = 0.0;
    for (&sp, _) in scores.iter().zip(labels).filter(|(_, l)| l.is_malignant()) {
        for (&sn, _) in scores.iter().zip(labels).filter(|(_, l)| !l.is_malignant()) {
            wins += if sp > sn {
                1.0
            } else if sp == sn {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(wins / (p * n) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(bits: &[u8]) -> Vec<Label> {
        bits.iter().map(|&b| Label::from_u8(b).unwrap()).collect()
    }

    #[test]
    fn worked_examples() {
        let y = labels(&[1, 0, 1, 0]);
        let c = roc_curve(&[0.9, 0.8, 0.7, 0.1], &y).unwrap();
        assert_eq!(c.auc(), 0.75);
        assert_eq!(pairwise_auc(&[0.9, 0.8, 0.7, 0.1], &y).unwrap(), 0.75);

        let perfect = roc_curve(&[1.0, 0.0, 1.0, 0.0], &y).unwrap();
        assert!(perfect.points.contains(&(0.0, 1.0)));
        assert_eq!(perfect.auc(), 1.0);

        let flat = roc_curve(&[0.3; 4], &y).unwrap();
        assert_eq!(flat.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(flat.auc(), 0.5);

        assert!(roc_curve(&[0.1, 0.2], &labels(&[1, 1])).is_err());
    }

    #[test]
    fn auc_of_fixed_curves() {
        let diag = RocCurve { points: vec![(0.0, 0.0), (1.0, 1.0)] };
        assert_eq!(auc(&diag), 0.5);
        let step = RocCurve { points: vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)] };
        assert_eq!(auc(&step), 1.0);
        assert_eq!(step.to_csv(), "fpr,tpr\n0,0\n0,1\n1,1\n");
    }
}
