//! Training-time augmentation: which transforms fire for each sample
//! index, and the fact that a plan is a pure function of (seed, index).

use ebus3d::nets::GraphicSignal;
use ebus3d::preproc::{augment_slice, shuffle_frames, AugmentConfig, AugmentPlan, Frame, Mode, Slice};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = AugmentConfig { seed: 42, ..Default::default() };
    let (w, h) = (32, 24);
    let frames: Vec<Frame> = (0..24)
        .map(|t| Frame::from_fn(w, h, |x, y| [((x + y) % 16) as f32 / 16.0, t as f32 / 24.0, 0.5]))
        .collect();
    let slice = Slice::stack(&frames, GraphicSignal::grayscale(false), Mode::Grayscale, "L0", 0.0)?;

    println!("index  flip  noise  blur_sigma  max|Δ|");
    let mut fired = 0;
    for i in 0..16u64 {
        let plan = AugmentPlan::draw(&cfg, i);
        let out = augment_slice(&slice, &cfg, i);
        assert_eq!(out, augment_slice(&slice, &cfg, i), "augmentation must be reproducible");
        assert!(out.volume.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let delta = out.volume.max_abs_diff(&slice.volume)?;
        fired += usize::from(!plan.is_identity());
        println!(
            "{i:>5}  {:<5} {:<6} {:>10}  {delta:.4}",
            plan.flip,
            plan.noise,
            plan.blur_sigma.map_or("-".into(), |s| format!("{s:.3}"))
        );
    }
    println!("{fired}/16 samples augmented (each transform fires with p = 0.2)");

    // The temporal-order control: a seeded permutation of the 24 frames.
    let shuffled = shuffle_frames(&slice, 7, 0);
    let order: Vec<usize> = (0..24)
        .map(|k| (0..24).find(|&j| shuffled.frame(k) == slice.frame(j)).unwrap())
        .collect();
    println!("shuffled frame order: {order:?}");
    Ok(())
}
