//! Print the per-stage output shapes of all three variants at full width
//! for one 704×576 slice, without allocating any weights.

use ebus3d::nets::{ModelConfig, ModelVariant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let volume = [1, 3, 24, 576, 704];
    let elasto = [1, 3, 576, 704];
    for v in ModelVariant::ALL {
        println!("== {}", v.name());
        let rows = ModelConfig::full(v).trace(&volume, v.uses_elastography().then_some(&elasto[..]))?;
        for (name, shape) in rows {
            println!("  {name:<12} {shape:?}");
        }
    }
    Ok(())
}
