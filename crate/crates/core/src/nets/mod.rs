//! Residual encoders, the three fusion heads and checkpoint files.

pub mod checkpoint;
pub mod encoder;
pub mod layers;
pub mod model;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use encoder::{
    Encoder, Encoder2d, Encoder3d, EncoderSpec, ResStageSpec, ResidualBlock,
    STAGE_CHANNELS,
};
pub use layers::{BatchNorm, Conv, ConvBn, Entry, EntryMut, Linear};
pub use model::{Batch, ModelConfig, Res3dNet, FUSION_DIM};

/// Which EBUS modes a model is trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    /// Grayscale slices only.
    U,
    /// Grayscale and Doppler slices, gated by the graphic signal.
    UD,
    /// UD plus the 2D elastography path.
    UDE,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 3] = [ModelVariant::U, ModelVariant::UD, ModelVariant::UDE];

    pub fn tag(self) -> u8 {
        match self {
            ModelVariant::U => 0,
            ModelVariant::UD => 1,
            ModelVariant::UDE => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::U => "Res3D_U",
            ModelVariant::UD => "Res3D_UD",
            ModelVariant::UDE => "Res3D_UDE",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            ModelVariant::U => "U",
            ModelVariant::UD => "UD",
            ModelVariant::UDE => "UDE",
        }
    }

    pub fn uses_signal(self) -> bool {
        self != ModelVariant::U
    }

    pub fn uses_doppler(self) -> bool {
        self != ModelVariant::U
    }

    pub fn uses_elastography(self) -> bool {
        self == ModelVariant::UDE
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim();
        let key = key.strip_prefix("Res3D_").unwrap_or(key);
        Self::ALL
            .into_iter()
            .find(|v| v.short().eq_ignore_ascii_case(key))
            .ok_or_else(|| Error::invalid(format!("unknown model variant {s:?} (expected U, UD or UDE)")))
    }
}

/// `[is_grayscale, is_doppler, has_elastography]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GraphicSignal([bool; 3]);

impl GraphicSignal {
    pub fn new(is_grayscale: bool, is_doppler: bool, has_elastography: bool) -> Result<Self> {
        if is_grayscale == is_doppler {
            return Err(Error::invalid(
                "graphic signal must mark exactly one of grayscale and Doppler",
            ));
        }
        Ok(GraphicSignal([is_grayscale, is_doppler, has_elastography]))
    }

    pub fn grayscale(has_elastography: bool) -> Self {
        GraphicSignal([true, false, has_elastography])
    }

    pub fn doppler(has_elastography: bool) -> Self {
        GraphicSignal([false, true, has_elastography])
    }

    pub fn is_grayscale(self) -> bool {
        self.0[0]
    }

    pub fn is_doppler(self) -> bool {
        self.0[1]
    }

    pub fn has_elastography(self) -> bool {
        self.0[2]
    }

    pub fn bits(self) -> [bool; 3] {
        self.0
    }

    pub fn to_vec<T: crate::tensor::Element>(self) -> [T; 3] {
        self.0.map(|b| if b { T::one() } else { T::zero() })
    }
}

impl fmt::Display for GraphicSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.0.map(u8::from);
        write!(f, "[{a},{b},{c}]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in ModelVariant::ALL {
            assert_eq!(v.to_string().parse::<ModelVariant>().unwrap(), v);
            assert_eq!(v.short().parse::<ModelVariant>().unwrap(), v);
            assert_eq!(ModelVariant::from_tag(v.tag()), Some(v));
        }
        assert!("UE".parse::<ModelVariant>().is_err());
    }

    #[test]
    fn signal_requires_exactly_one_mode() {
        assert!(GraphicSignal::new(true, true, false).is_err());
        assert!(GraphicSignal::new(false, false, true).is_err());
        assert_eq!(GraphicSignal::new(false, true, true).unwrap(), GraphicSignal::doppler(true));
        assert_eq!(GraphicSignal::grayscale(false).to_vec::<f32>(), [1.0, 0.0, 0.0]);
        assert_eq!(GraphicSignal::doppler(true).to_string(), "[0,1,1]");
    }
}
