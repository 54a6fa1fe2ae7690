//! Render a small synthetic EBUS dataset and inspect its manifest.
//!
//! `cargo run --release --example synth_dataset [out_dir]`

use std::path::PathBuf;

use ebus3d::preproc::Mode;
use ebus3d::synth::manifest::validate_manifest;
use ebus3d::synth::manifest::MANIFEST_FILE;
use ebus3d::synth::{frame_variance, generate_dataset, read_segment_frames, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ebus3d-synth"));
    let cfg = SynthConfig { patients: 6, width: 64, height: 48, seed: 3, ..Default::default() };
    let manifest = generate_dataset(&cfg, &out)?;
    println!("{} patients, {} lesions -> {}", manifest.patients.len(), manifest.lesion_count(), out.display());

    for (patient, lesion) in manifest.lesions() {
        let modes: Vec<&str> = Mode::ALL
            .iter()
            .filter(|&&m| lesion.segment(m).is_some())
            .map(|m| m.name())
            .collect();
        let gray = lesion.segment(Mode::Grayscale).expect("every lesion has grayscale video");
        let var = frame_variance(&read_segment_frames(&out, gray)?);
        println!(
            "{:<6} {:<8} {:<9} {:<6} modes={:<28} gray var {var:.5}",
            patient.id,
            lesion.id,
            format!("{:?}", lesion.label),
            format!("{:?}", patient.split),
            modes.join(","),
        );
    }
    let violations = validate_manifest(&out.join(MANIFEST_FILE))?;
    println!("manifest violations: {}", violations.len());
    Ok(())
}
