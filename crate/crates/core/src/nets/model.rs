//! Res3D_U / Res3D_UD / Res3D_UDE.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{self, Array, Element, Parameters, Tensor};

use super::encoder::{Encoder2d, Encoder3d, EncoderSpec};
use super::layers::{Entry, EntryMut, Linear};
use super::{GraphicSignal, ModelVariant};

/// Width of the per-path feature vectors and of the attention weights.
pub const FUSION_DIM: usize = 1000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    /// Shared by both paths; the 2D path drops the temporal axis.
    pub encoder: EncoderSpec,
    pub fusion_dim: usize,
}

impl ModelConfig {
    /// The full-width reference network.
    pub fn full(variant: ModelVariant) -> Self {
        ModelConfig {
            variant,
            encoder: EncoderSpec::standard(),
            fusion_dim: FUSION_DIM,
        }
    }

    /// Reference topology with every encoder channel count divided by `divisor`.
    pub fn narrowed(variant: ModelVariant, divisor: usize) -> Self {
        ModelConfig {
            encoder: EncoderSpec::standard().narrowed(divisor),
            ..Self::full(variant)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.fusion_dim == 0 {
            return Err(Error::invalid("fusion_dim must be positive"));
        }
        Ok(())
    }

    /// Output shape of every stage for a volume batch `N×C×T×H×W` (and, for
    /// UDE, an elastography batch `N×C×H×W`), without running the network.
    pub fn trace(
        &self,
        volume_shape: &[usize],
        elasto_shape: Option<&[usize]>,
    ) -> Result<Vec<(String, Vec<usize>)>> {
        let n = volume_shape.first().copied().unwrap_or(0);
        let mut rows = Vec::new();
        let path = |tag: &str, shapes: Vec<(String, Vec<usize>)>, rows: &mut Vec<_>| {
            let last = shapes.last().map(|s| s.1.clone()).unwrap_or_default();
            for (name, s) in shapes {
                rows.push((format!("{tag}.{name}"), s));
            }
            rows.push((format!("{tag}.pool"), last[..2].to_vec()));
            rows.push((format!("{tag}.fc"), vec![last[0], self.fusion_dim]));
        };
        if volume_shape.len() != 5 {
            return Err(Error::shape(format!(
                "3D path expects N×C×T×H×W, got {volume_shape:?}"
            )));
        }
        path("3d", self.encoder.trace_shapes::<3>(volume_shape)?, &mut rows);
        if self.variant.uses_elastography() {
            let e = elasto_shape.ok_or_else(|| Error::Variant {
                variant: self.variant.name(),
                detail: "needs an elastography input shape".into(),
            })?;
            if e.len() != 4 || e[0] != n {
                return Err(Error::shape(format!(
                    "2D path expects {n}×C×H×W, got {e:?}"
                )));
            }
            path("2d", self.encoder.trace_shapes::<2>(e)?, &mut rows);
            rows.push(("sum".into(), vec![n, self.fusion_dim]));
        }
        if self.variant.uses_signal() {
            rows.push(("attention".into(), vec![n, self.fusion_dim]));
        }
        rows.push(("output".into(), vec![n, 1]));
        Ok(rows)
    }
}

/// One model input batch. Volumes are `N×C×T×H×W`; elastography images,
/// when present, `N×C×H×W` (a zero image stands in for a missing one).
#[derive(Clone, Debug)]
pub struct Batch<T: Element> {
    pub volumes: Array<T>,
    pub signals: Option<Vec<GraphicSignal>>,
    pub elasto: Option<Array<T>>,
}

impl<T: Element> Batch<T> {
    pub fn new(volumes: Array<T>) -> Self {
        Batch {
            volumes,
            signals: None,
            elasto: None,
        }
    }

    pub fn with_signals(mut self, signals: Vec<GraphicSignal>) -> Self {
        self.signals = Some(signals);
        self
    }

    pub fn with_elasto(mut self, elasto: Array<T>) -> Self {
        self.elasto = Some(elasto);
        self
    }

    pub fn len(&self) -> usize {
        self.volumes.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Intermediate values of one forward pass.
pub struct Forward<T: Element> {
    pub f3d: Tensor<T>,
    pub f2d: Option<Tensor<T>>,
    /// Attention weights `w = linear(signal)`.
    pub gate: Option<Tensor<T>>,
    /// Input to the final head.
    pub fused: Tensor<T>,
    /// `N×1` scores in (0, 1).
    pub score: Tensor<T>,
}

pub struct Res3dNet<T: Element> {
    config: ModelConfig,
    pub enc3d: Encoder3d<T>,
    pub fc3d: Linear<T>,
    pub enc2d: Option<Encoder2d<T>>,
    pub fc2d: Option<Linear<T>>,
    pub attention: Option<Linear<T>>,
    pub head: Linear<T>,
}

impl<T: Element> Res3dNet<T> {
    /// Fresh weights drawn from a ChaCha8 stream seeded with `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feat = config.encoder.out_channels();
        let dim = config.fusion_dim;
        let enc3d = Encoder3d::new(&config.encoder, &mut rng)?;
        let fc3d = Linear::new(feat, dim, &mut rng);
        let (enc2d, fc2d) = if config.variant.uses_elastography() {
            (
                Some(Encoder2d::new(&config.encoder, &mut rng)?),
                Some(Linear::new(feat, dim, &mut rng)),
            )
        } else {
            (None, None)
        };
        let attention = config
            .variant
            .uses_signal()
            .then(|| Linear::new(3, dim, &mut rng));
        let head = Linear::new(dim, 1, &mut rng);
        Ok(Res3dNet {
            config,
            enc3d,
            fc3d,
            enc2d,
            fc2d,
            attention,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> ModelVariant {
        self.config.variant
    }

    fn reject(&self, detail: impl Into<String>) -> Error {
        Error::Variant {
            variant: self.variant().name(),
            detail: detail.into(),
        }
    }

    fn check(&self, batch: &Batch<T>) -> Result<()> {
        let v = self.variant();
        let vs = batch.volumes.shape();
        if vs.len() != 5 {
            return Err(Error::shape(format!("volumes must be N×C×T×H×W, got {vs:?}")));
        }
        let n = vs[0];
        match (&batch.signals, v.uses_signal()) {
            (Some(s), _) if s.len() != n => {
                return Err(Error::shape(format!("{} graphic signals for {n} volumes", s.len())))
            }
            (None, true) => return Err(self.reject("requires a graphic signal per slice")),
            (Some(s), false) if s.iter().any(|g| !g.is_grayscale()) => {
                return Err(self.reject("accepts grayscale slices only"))
            }
            _ => {}
        }
        match (&batch.elasto, v.uses_elastography()) {
            (Some(_), false) => Err(self.reject("has no elastography path")),
            (None, true) => Err(self.reject(
                "requires an elastography image per slice (zero image when none exists)",
            )),
            (Some(e), true) if e.rank() != 4 || e.shape()[0] != n => Err(Error::shape(format!(
                "elastography batch must be {n}×C×H×W, got {:?}",
                e.shape()
            ))),
            _ => Ok(()),
        }
    }

    pub fn forward_detailed(&self, batch: &Batch<T>, training: bool) -> Result<Forward<T>> {
        self.check(batch)?;
        let x = Tensor::constant(batch.volumes.clone());
        let pooled = tensor::global_avg_pool(&self.enc3d.forward(&x, training)?)?;
        let f3d = self.fc3d.forward(&pooled)?;

        let f2d = match (&self.enc2d, &self.fc2d, &batch.elasto) {
            (Some(enc), Some(fc), Some(e)) => {
                let e = Tensor::constant(e.clone());
                Some(fc.forward(&tensor::global_avg_pool(&enc.forward(&e, training)?)?)?)
            }
            _ => None,
        };
        let summed = match &f2d {
            Some(f2d) => tensor::add(&f3d, f2d)?,
            None => f3d.clone(),
        };

        let gate = match (&self.attention, &batch.signals) {
            (Some(att), Some(signals)) => {
                let data = signals.iter().flat_map(|s| s.to_vec::<T>()).collect();
                let s = Tensor::constant(Array::new(vec![signals.len(), 3], data)?);
                Some(att.forward(&s)?)
            }
            _ => None,
        };
        let fused = match &gate {
            Some(w) => tensor::mul(&summed, w)?,
            None => summed,
        };
        let score = tensor::sigmoid(&self.head.forward(&fused)?);
        Ok(Forward {
            f3d,
            f2d,
            gate,
            fused,
            score,
        })
    }

    /// `N×1` malignancy scores.
    pub fn forward(&self, batch: &Batch<T>, training: bool) -> Result<Tensor<T>> {
        Ok(self.forward_detailed(batch, training)?.score)
    }

    /// Every parameter and running-statistics buffer, in checkpoint order.
    pub fn visit_state(&self, f: &mut dyn FnMut(&str, Entry<'_, T>)) {
        self.enc3d.visit("enc3d", f);
        self.fc3d.visit("fc3d", f);
        if let Some(e) = &self.enc2d {
            e.visit("enc2d", f);
        }
        if let Some(l) = &self.fc2d {
            l.visit("fc2d", f);
        }
        if let Some(l) = &self.attention {
            l.visit("attention", f);
        }
        self.head.visit("head", f);
    }

    pub fn visit_state_mut(&mut self, f: &mut dyn FnMut(&str, EntryMut<'_, T>)) {
        self.enc3d.visit_mut("enc3d", f);
        self.fc3d.visit_mut("fc3d", f);
        if let Some(e) = &mut self.enc2d {
            e.visit_mut("enc2d", f);
        }
        if let Some(l) = &mut self.fc2d {
            l.visit_mut("fc2d", f);
        }
        if let Some(l) = &mut self.attention {
            l.visit_mut("attention", f);
        }
        self.head.visit_mut("head", f);
    }

    pub fn state_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit_state(&mut |name, _| names.push(name.to_string()));
        names
    }
}

impl<T: Element> Parameters<T> for Res3dNet<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.visit_state(&mut |name, e| {
            if let Entry::Param(p) = e {
                f(name, p)
            }
        });
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.visit_state_mut(&mut |name, e| {
            if let EntryMut::Param(p) = e {
                f(name, p)
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::ResStageSpec;

    fn toy(variant: ModelVariant) -> ModelConfig {
        ModelConfig {
            variant,
            encoder: EncoderSpec {
                in_channels: 3,
                stem_channels: 2,
                stem_kernel: 5,
                stages: vec![ResStageSpec::new(2, 2), ResStageSpec::new(2, 3)],
            },
            fusion_dim: 6,
        }
    }

    fn batch(variant: ModelVariant, n: usize) -> Batch<f64> {
        let vol = Array::from_fn(&[n, 3, 3, 8, 6], |i| ((i * 7919) % 101) as f64 / 101.0);
        let mut b = Batch::new(vol);
        if variant.uses_signal() {
            b = b.with_signals((0..n).map(|i| GraphicSignal::new(i % 2 == 0, i % 2 == 1, false).unwrap()).collect());
        }
        if variant.uses_elastography() {
            b = b.with_elasto(Array::zeros(&[n, 3, 8, 6]));
        }
        b
    }

    #[test]
    fn zero_head_scores_half() {
        for v in ModelVariant::ALL {
            let mut net = Res3dNet::<f64>::new(toy(v), 5).unwrap();
            net.head.weight = Tensor::parameter(Array::zeros(&[1, 6]));
            let s = net.forward(&batch(v, 2), false).unwrap();
            assert_eq!(s.shape(), &[2, 1]);
            assert!(s.value().data().iter().all(|&p| p == 0.5), "{v}");
        }
    }

    #[test]
    fn scores_are_strictly_inside_unit_interval() {
        for v in ModelVariant::ALL {
            let net = Res3dNet::<f64>::new(toy(v), 6).unwrap();
            let s = net.forward(&batch(v, 3), true).unwrap();
            assert!(s.value().data().iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn variant_contracts() {
        let u = Res3dNet::<f64>::new(toy(ModelVariant::U), 0).unwrap();
        let doppler = batch(ModelVariant::U, 1).with_signals(vec![GraphicSignal::doppler(false)]);
        assert!(matches!(u.forward(&doppler, false), Err(Error::Variant { .. })));
        let elasto = batch(ModelVariant::U, 1).with_elasto(Array::zeros(&[1, 3, 8, 6]));
        assert!(matches!(u.forward(&elasto, false), Err(Error::Variant { .. })));

        let ud = Res3dNet::<f64>::new(toy(ModelVariant::UD), 0).unwrap();
        assert!(ud.forward(&batch(ModelVariant::U, 1), false).is_err());
        let ude = Res3dNet::<f64>::new(toy(ModelVariant::UDE), 0).unwrap();
        assert!(ude.forward(&batch(ModelVariant::UD, 1), false).is_err());
        assert!(ud.enc2d.is_none() && ud.fc2d.is_none());
    }

    #[test]
    fn signal_selects_attention_row() {
        let net = Res3dNet::<f64>::new(toy(ModelVariant::UD), 9).unwrap();
        let vol = batch(ModelVariant::U, 1).volumes;
        let score = |s| {
            let b = Batch::new(vol.clone()).with_signals(vec![s]);
            net.forward(&b, false).unwrap().value().data()[0]
        };
        assert_ne!(score(GraphicSignal::grayscale(false)), score(GraphicSignal::doppler(false)));
    }

    #[test]
    fn zero_gate_makes_score_content_free() {
        let mut net = Res3dNet::<f64>::new(toy(ModelVariant::UD), 2).unwrap();
        let att = net.attention.as_mut().unwrap();
        att.weight = Tensor::parameter(Array::zeros(&[6, 3]));
        att.bias = Tensor::parameter(Array::zeros(&[6]));
        let b = net.head.bias.value().data()[0];
        let expected = 1.0 / (1.0 + (-b).exp());
        let s = net.forward(&batch(ModelVariant::UD, 4), false).unwrap();
        assert!(s.value().data().iter().all(|&p| p == expected));
    }

    #[test]
    fn state_names_are_unique_and_ordered() {
        let net = Res3dNet::<f32>::new(toy(ModelVariant::UDE), 1).unwrap();
        let names = net.state_names();
        let set: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(set.len(), names.len());
        assert_eq!(names[0], "enc3d.stem.conv.weight");
        assert_eq!(names.last().unwrap(), "head.bias");
        assert!(names.contains(&"enc2d.res2.proj.bn.running_var".to_string()));
    }

    #[test]
    fn full_trace_reproduces_reference_sizes() {
        let cfg = ModelConfig::full(ModelVariant::UDE);
        let rows = cfg.trace(&[1, 3, 24, 576, 704], Some(&[1, 3, 576, 704])).unwrap();
        let get = |k: &str| rows.iter().find(|r| r.0 == k).unwrap().1.clone();
        assert_eq!(get("3d.res6"), vec![1, 512, 24, 9, 11]);
        assert_eq!(get("2d.res6"), vec![1, 512, 9, 11]);
        assert_eq!(get("sum"), vec![1, 1000]);
        assert_eq!(get("attention"), vec![1, 1000]);
        assert_eq!(get("output"), vec![1, 1]);
    }
}
