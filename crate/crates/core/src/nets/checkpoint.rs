//! Binary checkpoint files.
//!
//! Layout (little-endian): magic `EBUS3D\0`, version u32, variant tag u8,
//! entry count u32; per entry: name length u16, UTF-8 name, rank u8, extents
//! u32 each, raw f32 values; footer: step u64, schedule T u64, seed u64.
//! Entries cover trainable parameters and batch-norm running statistics.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Array, Element, Tensor};

use super::encoder::{EncoderSpec, ResStageSpec};
use super::layers::{Entry, EntryMut};
use super::model::{ModelConfig, Res3dNet};
use super::ModelVariant;

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"EBUS3D\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Training progress stored in the footer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub step: u64,
    pub total_steps: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub variant: ModelVariant,
    pub entries: Vec<(String, Array<f32>)>,
    pub meta: CheckpointMeta,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::CheckpointTruncated(format!("{what} at byte {} needs {n} bytes", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        self.array(what).map(u16::from_le_bytes)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.array(what).map(u32::from_le_bytes)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.array(what).map(u64::from_le_bytes)
    }
}

impl Checkpoint {
    /// Snapshot of a model's parameters and running statistics (stored as f32).
    pub fn capture<T: Element>(model: &Res3dNet<T>, meta: CheckpointMeta) -> Self {
        let mut entries = Vec::new();
        model.visit_state(&mut |name, e| {
            let a = match e {
                Entry::Param(p) => p.value().cast::<f32>(),
                Entry::Buffer(b) => b.cast::<f32>(),
            };
            entries.push((name.to_string(), a));
        });
        Checkpoint {
            variant: model.variant(),
            entries,
            meta,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self.entries.iter().map(|(n, a)| n.len() + 3 + 4 * (a.rank() + a.len())).sum();
        let mut out = Vec::with_capacity(16 + payload + 24);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(self.variant.tag());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, a) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(a.rank() as u8);
            for &e in a.shape() {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
            for &v in a.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for v in [self.meta.step, self.meta.total_steps, self.meta.seed] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
            return Err(Error::NotACheckpoint);
        }
        let mut r = Reader {
            bytes,
            pos: CHECKPOINT_MAGIC.len(),
        };
        let version = r.u32("format version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion(version));
        }
        let tag = r.u8("variant tag")?;
        let variant = ModelVariant::from_tag(tag)
            .ok_or_else(|| Error::invalid(format!("checkpoint has unknown variant tag {tag}")))?;
        let count = r.u32("entry count")? as usize;
        let mut entries = Vec::with_capacity(count.min(4096));
        for i in 0..count {
            let len = r.u16("name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| Error::invalid(format!("entry {i} has a non-UTF-8 name")))?
                .to_string();
            let rank = r.u8("rank")? as usize;
            let shape = (0..rank)
                .map(|_| r.u32("extent").map(|e| e as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = shape.iter().product::<usize>();
            let raw = r.take(n.saturating_mul(4), &format!("values of {name}"))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                .collect();
            let a = Array::new(shape, data)
                .map_err(|e| Error::invalid(format!("entry {name}: {e}")))?;
            entries.push((name, a));
        }
        let meta = CheckpointMeta {
            step: r.u64("step")?,
            total_steps: r.u64("schedule length")?,
            seed: r.u64("seed")?,
        };
        if r.pos != bytes.len() {
            return Err(Error::invalid(format!(
                "{} trailing bytes after checkpoint footer",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            variant,
            entries,
            meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Copy stored values into `model`. Every model entry must be present
    /// with the same shape and the checkpoint may hold nothing else.
    pub fn restore<T: Element>(&self, model: &mut Res3dNet<T>) -> Result<()> {
        let stored: HashMap<&str, &Array<f32>> =
            self.entries.iter().map(|(n, a)| (n.as_str(), a)).collect();
        // validate before touching the model so a failed restore leaves it intact
        let mut problem = None;
        let mut wanted = 0;
        model.visit_state(&mut |name, e| {
            wanted += 1;
            if problem.is_some() {
                return;
            }
            let shape = match e {
                Entry::Param(p) => p.shape().to_vec(),
                Entry::Buffer(b) => b.shape().to_vec(),
            };
            problem = match stored.get(name) {
                None => Some(format!("missing parameter {name}")),
                Some(a) if a.shape() != shape.as_slice() => Some(format!(
                    "parameter {name} has shape {:?} in the checkpoint but {shape:?} in the model",
                    a.shape()
                )),
                _ => None,
            };
        });
        if let Some(p) = problem {
            return Err(Error::CheckpointMismatch(p));
        }
        if wanted != self.entries.len() || self.variant != model.variant() {
            let names = model.state_names();
            let extra = self.entries.iter().find(|(n, _)| !names.contains(n));
            return Err(Error::CheckpointMismatch(match extra {
                Some((n, _)) => format!("unexpected parameter {n} for {}", model.variant()),
                None => format!("checkpoint is {} but model is {}", self.variant, model.variant()),
            }));
        }
        model.visit_state_mut(&mut |name, e| {
            let a = stored[name].cast::<T>();
            match e {
                EntryMut::Param(p) => *p = Tensor::parameter(a),
                EntryMut::Buffer(b) => *b = a,
            }
        });
        Ok(())
    }

    fn shape_of(&self, name: &str) -> Option<&[usize]> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a.shape())
    }

    /// Recover the architecture from stored shapes. Stage strides are not
    /// stored; the standard (1,2,2) downsampling is assumed.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let need = |name: &str| {
            self.shape_of(name)
                .ok_or_else(|| Error::CheckpointMismatch(format!("missing parameter {name}")))
        };
        let stem = need("enc3d.stem.conv.weight")?;
        if stem.len() != 5 {
            return Err(Error::CheckpointMismatch(format!("stem weight has rank {}", stem.len())));
        }
        let mut stages = Vec::new();
        for i in 1.. {
            let Some(w) = self.shape_of(&format!("enc3d.res{i}.conv_b.conv.weight")) else {
                break;
            };
            stages.push(ResStageSpec {
                kernel: w[2],
                ..ResStageSpec::new(w[1], w[0])
            });
        }
        let fusion_dim = need("fc3d.weight")?[0];
        Ok(ModelConfig {
            variant: self.variant,
            encoder: EncoderSpec {
                in_channels: stem[1],
                stem_channels: stem[0],
                stem_kernel: stem[2],
                stages,
            },
            fusion_dim,
        })
    }

    /// Build a model of the stored architecture and restore into it.
    pub fn build<T: Element>(&self) -> Result<Res3dNet<T>> {
        let mut model = Res3dNet::new(self.model_config()?, self.meta.seed)?;
        self.restore(&mut model)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(variant: ModelVariant) -> Res3dNet<f32> {
        let mut cfg = ModelConfig::narrowed(variant, 16);
        cfg.encoder.stages.truncate(2);
        cfg.fusion_dim = 8;
        Res3dNet::new(cfg, 11).unwrap()
    }

    #[test]
    fn bytes_round_trip() {
        let meta = CheckpointMeta { step: 7, total_steps: 30, seed: 11 };
        let ck = Checkpoint::capture(&tiny(ModelVariant::UDE), meta);
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        let rebuilt: Res3dNet<f32> = back.build().unwrap();
        assert_eq!(rebuilt.config(), tiny(ModelVariant::UDE).config());
    }

    #[test]
    fn distinct_errors() {
        let ck = Checkpoint::capture(&tiny(ModelVariant::U), CheckpointMeta::default());
        let mut bytes = ck.to_bytes();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::NotACheckpoint)));

        let mut v2 = bytes.clone();
        v2[7..11].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(Checkpoint::from_bytes(&v2), Err(Error::CheckpointVersion(2))));

        bytes.truncate(bytes.len() - 9);
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::CheckpointTruncated(_))));
    }

    #[test]
    fn ud_into_ude_names_first_missing_parameter() {
        let ck = Checkpoint::capture(&tiny(ModelVariant::UD), CheckpointMeta::default());
        let mut ude = tiny(ModelVariant::UDE);
        match ck.restore(&mut ude) {
            Err(Error::CheckpointMismatch(msg)) => {
                assert_eq!(msg, "missing parameter enc2d.stem.conv.weight")
            }
            other => panic!("unexpected {other:?}"),
        }
        let ck = Checkpoint::capture(&tiny(ModelVariant::UDE), CheckpointMeta::default());
        let mut ud = tiny(ModelVariant::UD);
        assert!(matches!(ck.restore(&mut ud), Err(Error::CheckpointMismatch(_))));
    }
}
