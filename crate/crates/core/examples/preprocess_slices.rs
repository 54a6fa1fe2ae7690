//! Synthesise a dataset, cut it into 8 s / 24-frame slices and list the
//! resulting index. Also prints the clip arithmetic for a few durations.

use std::path::PathBuf;

use ebus3d::preproc::{clip_count, preprocess_dataset, segment_clips, PreprocessConfig, CLIP_OVERLAP, CLIP_SECONDS};
use ebus3d::synth::manifest::MANIFEST_FILE;
use ebus3d::synth::{generate_dataset, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for d in [5.9, 6.0, 9.0, 12.0, 60.0] {
        let starts: Vec<f64> = segment_clips(d, CLIP_SECONDS, CLIP_OVERLAP).iter().map(|c| c.start).collect();
        println!("{d:>5.1} s -> {} clips starting at {starts:?}", clip_count(d, CLIP_SECONDS, CLIP_OVERLAP));
    }

    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ebus3d-preprocess"));
    let (w, h) = (64, 48);
    let synth = SynthConfig { patients: 4, width: w, height: h, seed: 8, ..Default::default() };
    generate_dataset(&synth, &root.join("data"))?;
    let cfg = PreprocessConfig { crop_size: (w, h), ..Default::default() };
    let index = preprocess_dataset(&root.join("data").join(MANIFEST_FILE), &root.join("slices"), &cfg)?;

    println!("\nlesion      split  label      gray  doppler  elasto");
    for l in &index.lesions {
        println!(
            "{:<11} {:<6} {:<10} {:>4} {:>8} {:>7}",
            l.lesion_id,
            format!("{:?}", l.split),
            format!("{:?}", l.label),
            l.grayscale_slices,
            l.doppler_slices,
            l.elasto_images
        );
    }
    println!("{} slices, {} elastography images -> {}", index.slices.len(), index.elasto.len(), root.join("slices").display());
    Ok(())
}
