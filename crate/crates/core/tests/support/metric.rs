//! ROC/AUC against brute-force threshold enumeration over exhaustive small
//! prediction sets, plus aggregation properties.

use ebus3d::metrics::{auc, pairwise_auc, roc_curve, Label};

/// For every distinct score `t`, from high to low: `(FPR, TPR)` of the rule
/// "malignant iff score ≥ t", preceded by the empty-positive point.
fn brute_roc(scores: &[f64], labels: &[Label]) -> Vec<(f64, f64)> {
    let p = labels.iter().filter(|l| l.is_malignant()).count();
    let n = labels.len() - p;
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut pts = vec![(0.0, 0.0)];
    for t in thresholds {
        let tp = (0..scores.len()).filter(|&i| scores[i] >= t && labels[i].is_malignant()).count();
        let fp = (0..scores.len()).filter(|&i| scores[i] >= t && !labels[i].is_malignant()).count();
        pts.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    pts
}

fn trapezoid(pts: &[(f64, f64)]) -> f64 {
    let mut a = 0.0;
    for i in 1..pts.len() {
        a += (pts[i].0 - pts[i - 1].0) * (pts[i].1 + pts[i - 1].1) * 0.5;
    }
    a
}

/// Every assignment of `levels` score values and both labels to `n` items.
fn check_all(n: usize, levels: usize) -> usize {
    let mut checked = 0;
    let total_scores = levels.pow(n as u32);
    for code in 0..total_scores {
        let mut c = code;
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let v = c % levels;
                c /= levels;
                (v as f64 + 0.5) / levels as f64
            })
            .collect();
        for bits in 0u32..(1 << n) {
            let labels: Vec<Label> =
                (0..n).map(|i| Label::from_u8(((bits >> i) & 1) as u8).unwrap()).collect();
            let one_class = bits == 0 || bits == (1 << n) - 1;
            let curve = roc_curve(&scores, &labels);
            if one_class {
                assert!(curve.is_err() && pairwise_auc(&scores, &labels).is_err());
                continue;
            }
            let curve = curve.unwrap();
            let want = brute_roc(&scores, &labels);
            assert_eq!(curve.points, want, "scores {scores:?} labels {bits:b}");
            let a = auc(&curve);
            assert!((a - trapezoid(&want)).abs() < 1e-12);
            assert!((a - pairwise_auc(&scores, &labels).unwrap()).abs() < 1e-12);
            checked += 1;
        }
    }
    checked
}

/// Every tie pattern up to six items (n levels realise all weak orderings
/// of n items) and every three-level pattern at seven and eight, each under
/// every two-class labelling.
pub fn exhaustive() -> String {
    let small: usize = (1..=6).map(|n| check_all(n, n)).sum();
    let large = check_all(7, 3) + check_all(8, 3);
    format!("{small} prediction sets of size ≤ 6 and {large} of size 7–8 agree with brute force")
}

