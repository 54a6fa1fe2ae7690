//! The whole pipeline (synth → preprocess → train → eval) on a deliberately
//! tiny configuration; finishes in well under a minute in release mode.
//!
//! `cargo run --release --example pipeline_tiny [work_dir]`

use std::path::PathBuf;

use ebus3d::app::{cmd_eval, cmd_preprocess, cmd_synth, cmd_train, RunConfig};
use ebus3d::metrics::Level;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ebus3d-tiny"));
    let text = format!(
        "variant = UDE
frame_width = 48
frame_height = 32
width_divisor = 16
fusion_dim = 64
patients = 6
epochs = 3
lr0 = 0.01
momentum = 0.9
micro_batch = 3
eval_every = 1
seed = 11
dataset = {d}/data
slices = {d}/slices
run = {d}/run
eval_dir = {d}/eval
",
        d = dir.display()
    );
    let cfg = RunConfig::parse(&text)?;
    let m = cmd_synth(&cfg, None)?;
    let index = cmd_preprocess(&cfg, None)?;
    println!("{} lesions, {} slices", m.lesion_count(), index.slices.len());
    let report = cmd_train(&cfg, None, true)?;
    println!("{} optimizer steps over {} training slices", report.steps.len(), report.train_samples);
    let ev = cmd_eval(&cfg, None)?;
    print!("{}", ev.summary());
    println!("lesion accuracy {:.3}; files in {}", ev.row(Level::Lesion).accuracy, cfg.eval_dir.display());
    Ok(())
}
