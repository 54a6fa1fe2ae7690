//! Save a model, load it back and check the restored network answers
//! identically.

use ebus3d::nets::{Batch, Checkpoint, CheckpointMeta, GraphicSignal, ModelConfig, ModelVariant, Res3dNet};
use ebus3d::tensor::Array;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = Res3dNet::<f32>::new(ModelConfig::narrowed(ModelVariant::UDE, 16), 1)?;
    let batch = Batch::new(Array::from_fn(&[2, 3, 6, 24, 32], |i| (i % 97) as f32 / 97.0))
        .with_signals(vec![GraphicSignal::grayscale(true), GraphicSignal::doppler(false)])
        .with_elasto(Array::from_fn(&[2, 3, 24, 32], |i| (i % 31) as f32 / 31.0));

    let path = std::env::temp_dir().join("ebus3d-example.ckpt");
    Checkpoint::capture(&model, CheckpointMeta { step: 0, total_steps: 0, seed: 1 }).save(&path)?;
    let loaded = Checkpoint::load(&path)?;
    println!("{} bytes, variant {}, meta {:?}", std::fs::metadata(&path)?.len(), loaded.variant.name(), loaded.meta);

    let restored = loaded.build::<f32>()?;
    let a = model.forward(&batch, false)?;
    let b = restored.forward(&batch, false)?;
    println!("scores before {:?}", a.value().data());
    println!("scores after  {:?}", b.value().data());
    assert_eq!(a.value(), b.value());

    // Restoring into an existing, differently initialised network.
    let mut other = Res3dNet::<f32>::new(ModelConfig::narrowed(ModelVariant::UDE, 16), 99)?;
    loaded.restore(&mut other)?;
    assert_eq!(other.forward(&batch, false)?.value(), a.value());
    println!("round trip exact");
    Ok(())
}
