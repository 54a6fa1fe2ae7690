//! Forward pass internals of each variant: 3D features, the attention gate
//! driven by the graphic signal, the elastography branch and the score.

use ebus3d::nets::{Batch, GraphicSignal, ModelConfig, ModelVariant, Res3dNet};
use ebus3d::tensor::Array;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let vol = Array::from_fn(&[2, 3, 4, 24, 32], |i| ((i * 31) % 101) as f32 / 101.0);
    let elasto = Array::from_fn(&[2, 3, 24, 32], |i| ((i * 17) % 53) as f32 / 53.0);
    for v in ModelVariant::ALL {
        let model = Res3dNet::<f32>::new(ModelConfig::narrowed(v, 16), 5)?;
        let mut batch = Batch::new(vol.clone());
        if v.uses_signal() {
            let gray = GraphicSignal::grayscale(v.uses_elastography());
            let other = if v.uses_doppler() { GraphicSignal::doppler(v.uses_elastography()) } else { gray };
            batch = batch.with_signals(vec![gray, other]);
        }
        if v.uses_elastography() {
            batch = batch.with_elasto(elasto.clone());
        }
        let fw = model.forward_detailed(&batch, false)?;
        println!("== {}", v.name());
        println!("  3D features   {:?}", fw.f3d.shape());
        if let Some(f) = &fw.f2d {
            println!("  2D features   {:?}", f.shape());
        }
        if let Some(g) = &fw.gate {
            let d = g.shape()[1];
            let head: Vec<String> = g.value().data()[..4].iter().map(|x| format!("{x:+.3}")).collect();
            println!("  gate          {:?} first of row 0: {head:?} (row 1 starts at {:+.3})", g.shape(), g.value().data()[d]);
        }
        println!("  fused         {:?}", fw.fused.shape());
        println!("  scores        {:?}", fw.score.value().data());
    }
    Ok(())
}
