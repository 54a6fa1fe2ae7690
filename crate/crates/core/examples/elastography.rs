//! Elastography frame selection: rank frames by chromatic (coloured) area
//! and keep the best three.

use ebus3d::preproc::{coverage_area, rank_by_coverage, ChromaThresholds, Frame, MAX_ELASTO_IMAGES};

fn main() {
    let (w, h) = (40, 30);
    // Frame k has a coloured disc of radius r_k over a gray background.
    let radii = [3.0, 9.0, 5.0, 12.0, 0.0, 9.0, 7.0];
    let frames: Vec<Frame> = radii
        .iter()
        .map(|&r: &f64| {
            Frame::from_fn(w, h, |x, y| {
                let (dx, dy) = (x as f64 - 20.0, y as f64 - 15.0);
                if dx.hypot(dy) < r {
                    [0.9, 0.2, 0.1]
                } else {
                    [0.4, 0.4, 0.4]
                }
            })
        })
        .collect();
    let t = ChromaThresholds::default();
    let scores: Vec<f64> = frames.iter().map(|f| coverage_area(f, t)).collect();
    for (k, s) in scores.iter().enumerate() {
        println!("frame {k}: radius {:>4.1}, coloured area {s:.4}", radii[k]);
    }
    // frames 1 and 5 tie; the earlier one ranks first
    println!("selected (best first): {:?}", rank_by_coverage(&scores, MAX_ELASTO_IMAGES));
}
