//! Residual encoders shared by the 3D (video) and 2D (elastography) paths.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{self, ConvSpec, Element, Tensor};

use super::layers::{ConvBn, Visit, VisitMut};

/// Channel pairs of the six residual stages.
pub const STAGE_CHANNELS: [(usize, usize); 6] =
    [(16, 16), (16, 32), (32, 64), (64, 128), (128, 256), (256, 512)];
pub const STEM_CHANNELS: usize = 16;
pub const STEM_KERNEL: usize = 5;
pub const INPUT_CHANNELS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResStageSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub spatial_downsample: usize,
    pub temporal_downsample: usize,
}

impl ResStageSpec {
    pub fn new(in_channels: usize, out_channels: usize) -> Self {
        ResStageSpec {
            in_channels,
            out_channels,
            kernel: 3,
            spatial_downsample: 2,
            temporal_downsample: 1,
        }
    }

    fn stride<const D: usize>(&self) -> [usize; D] {
        let mut s = [self.spatial_downsample; D];
        if D == 3 {
            s[0] = self.temporal_downsample;
        }
        s
    }

    fn needs_projection(&self) -> bool {
        self.in_channels != self.out_channels
            || self.spatial_downsample != 1
            || self.temporal_downsample != 1
    }
}

/// Stem and stage layout of one encoder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderSpec {
    pub in_channels: usize,
    pub stem_channels: usize,
    pub stem_kernel: usize,
    pub stages: Vec<ResStageSpec>,
}

impl EncoderSpec {
    pub fn standard() -> Self {
        EncoderSpec {
            in_channels: INPUT_CHANNELS,
            stem_channels: STEM_CHANNELS,
            stem_kernel: STEM_KERNEL,
            stages: STAGE_CHANNELS
                .iter()
                .map(|&(i, o)| ResStageSpec::new(i, o))
                .collect(),
        }
    }

    /// Same topology with every channel count divided by `divisor`
    /// (at least one channel).
    pub fn narrowed(&self, divisor: usize) -> Self {
        let d = |c: usize| (c / divisor.max(1)).max(1);
        EncoderSpec {
            in_channels: self.in_channels,
            stem_channels: d(self.stem_channels),
            stem_kernel: self.stem_kernel,
            stages: self
                .stages
                .iter()
                .map(|s| ResStageSpec {
                    in_channels: d(s.in_channels),
                    out_channels: d(s.out_channels),
                    ..*s
                })
                .collect(),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.stages
            .last()
            .map_or(self.stem_channels, |s| s.out_channels)
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev = self.stem_channels;
        if self.in_channels == 0 || self.stem_channels == 0 || self.stem_kernel % 2 == 0 {
            return Err(Error::invalid(format!(
                "encoder stem {}→{} with kernel {} is not buildable",
                self.in_channels, self.stem_channels, self.stem_kernel
            )));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.in_channels != prev {
                return Err(Error::invalid(format!(
                    "stage res{} expects {} input channels but receives {prev}",
                    i + 1,
                    s.in_channels
                )));
            }
            if s.out_channels == 0 || s.kernel % 2 == 0 || s.spatial_downsample == 0 || s.temporal_downsample == 0 {
                return Err(Error::invalid(format!("stage res{} is not buildable: {s:?}", i + 1)));
            }
            prev = s.out_channels;
        }
        Ok(())
    }

    fn stem_spec<const D: usize>(&self) -> ConvSpec<D> {
        ConvSpec::uniform(
            self.in_channels,
            self.stem_channels,
            self.stem_kernel,
            1,
            self.stem_kernel / 2,
        )
    }

    /// Per-stage output shapes for an `N×C×spatial` input, computed from the
    /// convolution geometry alone.
    pub fn trace_shapes<const D: usize>(&self, input: &[usize]) -> Result<Vec<(String, Vec<usize>)>> {
        self.validate()?;
        let mut shapes = Vec::with_capacity(self.stages.len() + 1);
        let mut shape = self.stem_spec::<D>().output_shape(input)?;
        shapes.push(("conv1".to_string(), shape.clone()));
        for (i, s) in self.stages.iter().enumerate() {
            let (a, b, _) = block_specs::<D>(s);
            shape = a.output_shape(&shape)?;
            shape = b.output_shape(&shape)?;
            shapes.push((format!("res{}", i + 1), shape.clone()));
        }
        Ok(shapes)
    }

    /// Closed-form trainable parameter count for rank `D`.
    pub fn parameter_count(&self, rank: u32) -> usize {
        let conv = |cin: usize, cout: usize, k: usize| cout * cin * k.pow(rank) + cout;
        let bn = |c: usize| 2 * c;
        let mut n = conv(self.in_channels, self.stem_channels, self.stem_kernel) + bn(self.stem_channels);
        for s in &self.stages {
            n += conv(s.in_channels, s.in_channels, s.kernel) + bn(s.in_channels);
            n += conv(s.in_channels, s.out_channels, s.kernel) + bn(s.out_channels);
            if s.needs_projection() {
                n += conv(s.in_channels, s.out_channels, 1) + bn(s.out_channels);
            }
        }
        n
    }
}

fn block_specs<const D: usize>(s: &ResStageSpec) -> (ConvSpec<D>, ConvSpec<D>, Option<ConvSpec<D>>) {
    let pad = s.kernel / 2;
    let stride = s.stride::<D>();
    let a = ConvSpec {
        kernel: [s.kernel; D],
        stride,
        padding: [pad; D],
        in_channels: s.in_channels,
        out_channels: s.in_channels,
    };
    let b = ConvSpec::uniform(s.in_channels, s.out_channels, s.kernel, 1, pad);
    let proj = s.needs_projection().then(|| ConvSpec {
        kernel: [1; D],
        stride,
        padding: [0; D],
        in_channels: s.in_channels,
        out_channels: s.out_channels,
    });
    (a, b, proj)
}

/// Two convolutions with a skip connection:
/// `relu(bn(conv_b(relu(bn(conv_a(x))))) + skip(x))`, where the skip is the
/// identity or a strided 1×1 projection when the shape changes.
pub struct ResidualBlock<T: Element, const D: usize> {
    pub conv_a: ConvBn<T, D>,
    pub conv_b: ConvBn<T, D>,
    pub projection: Option<ConvBn<T, D>>,
}

impl<T: Element, const D: usize> ResidualBlock<T, D> {
    pub fn new(stage: &ResStageSpec, rng: &mut impl Rng) -> Self {
        let (a, b, proj) = block_specs::<D>(stage);
        ResidualBlock {
            conv_a: ConvBn::new(a, rng),
            conv_b: ConvBn::new(b, rng),
            projection: proj.map(|p| ConvBn::new(p, rng)),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let h = tensor::relu(&self.conv_a.forward(x, training)?);
        let h = self.conv_b.forward(&h, training)?;
        let skip = match &self.projection {
            Some(p) => p.forward(x, training)?,
            None => x.clone(),
        };
        Ok(tensor::relu(&tensor::add(&h, &skip)?))
    }

    fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        self.conv_a.visit(&format!("{prefix}.conv_a"), f);
        self.conv_b.visit(&format!("{prefix}.conv_b"), f);
        if let Some(p) = &self.projection {
            p.visit(&format!("{prefix}.proj"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        self.conv_a.visit_mut(&format!("{prefix}.conv_a"), f);
        self.conv_b.visit_mut(&format!("{prefix}.conv_b"), f);
        if let Some(p) = &mut self.projection {
            p.visit_mut(&format!("{prefix}.proj"), f);
        }
    }
}

/// Stem convolution followed by residual stages; rank 3 for video slices
/// (`N×C×T×H×W`), rank 2 for still images (`N×C×H×W`).
pub struct Encoder<T: Element, const D: usize> {
    spec: EncoderSpec,
    pub stem: ConvBn<T, D>,
    pub blocks: Vec<ResidualBlock<T, D>>,
}

pub type Encoder3d<T> = Encoder<T, 3>;
pub type Encoder2d<T> = Encoder<T, 2>;

impl<T: Element, const D: usize> Encoder<T, D> {
    pub fn new(spec: &EncoderSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let stem = ConvBn::new(spec.stem_spec::<D>(), rng);
        let blocks = spec
            .stages
            .iter()
            .map(|s| ResidualBlock::new(s, rng))
            .collect();
        Ok(Encoder {
            spec: spec.clone(),
            stem,
            blocks,
        })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn forward(&self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        // reject inputs whose extents collapse before any compute
        self.spec.trace_shapes::<D>(x.shape())?;
        let mut h = tensor::relu(&self.stem.forward(x, training)?);
        for block in &self.blocks {
            h = block.forward(&h, training)?;
        }
        Ok(h)
    }

    pub(crate) fn visit(&self, prefix: &str, f: &mut Visit<'_, T>) {
        self.stem.visit(&format!("{prefix}.stem"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&format!("{prefix}.res{}", i + 1), f);
        }
    }

    pub(crate) fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<'_, T>) {
        self.stem.visit_mut(&format!("{prefix}.stem"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&format!("{prefix}.res{}", i + 1), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nets::layers::Entry;
    use crate::tensor::Array;

    #[test]
    fn standard_channel_chain() {
        let spec = EncoderSpec::standard();
        spec.validate().unwrap();
        let pairs: Vec<_> = spec.stages.iter().map(|s| (s.in_channels, s.out_channels)).collect();
        assert_eq!(pairs, STAGE_CHANNELS.to_vec());
        assert!(spec.stages.iter().all(|s| s.spatial_downsample == 2 && s.temporal_downsample == 1));
    }

    #[test]
    fn inconsistent_channels_rejected() {
        let mut spec = EncoderSpec::standard();
        spec.stages[2].in_channels = 48;
        assert!(spec.validate().is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Encoder3d::<f32>::new(&spec, &mut rng).is_err());
    }

    #[test]
    fn narrowed_standard_keeps_topology() {
        let spec = EncoderSpec::standard().narrowed(4);
        spec.validate().unwrap();
        assert_eq!(spec.stem_channels, 4);
        assert_eq!(spec.out_channels(), 128);
    }

    fn toy_spec() -> EncoderSpec {
        EncoderSpec {
            in_channels: 3,
            stem_channels: 2,
            stem_kernel: 5,
            stages: vec![ResStageSpec::new(2, 2), ResStageSpec::new(2, 4)],
        }
    }

    #[test]
    fn parameter_count_matches_hand_count() {
        // stem: 2·3·25 + 2 + 4 = 156
        // res1 (2→2, strided so projected): (2·2·9+2+4)·2 + (2·2+2+4) = 84 + 10 = 94
        // res2 (2→4): (2·2·9+2+4) + (4·2·9+4+8) + (4·2+4+8) = 42 + 84 + 20 = 146
        let spec = toy_spec();
        assert_eq!(spec.parameter_count(2), 156 + 94 + 146);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder2d::<f32>::new(&spec, &mut rng).unwrap();
        let mut n = 0;
        enc.visit("e", &mut |_, e| {
            if let Entry::Param(p) = e {
                n += p.value().len();
            }
        });
        assert_eq!(n, 396);
    }

    #[test]
    fn zero_input_stays_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = Encoder3d::<f32>::new(&toy_spec(), &mut rng).unwrap();
        let x = Tensor::constant(Array::zeros(&[1, 3, 4, 8, 8]));
        for training in [true, false] {
            let y = enc.forward(&x, training).unwrap();
            assert!(y.value().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn identity_block_with_zero_weights_is_relu() {
        let stage = ResStageSpec {
            spatial_downsample: 1,
            ..ResStageSpec::new(3, 3)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut block = ResidualBlock::<f64, 2>::new(&stage, &mut rng);
        assert!(block.projection.is_none());
        for conv in [&mut block.conv_a.conv, &mut block.conv_b.conv] {
            conv.weight = Tensor::parameter(Array::zeros(conv.weight.shape()));
        }
        let x = Tensor::constant(Array::from_fn(&[2, 3, 5, 4], |i| (i as f64 * 0.37).sin()));
        for training in [true, false] {
            let y = block.forward(&x, training).unwrap();
            assert_eq!(y.value(), &x.value().map(|v| v.max(0.0)));
        }
    }

    #[test]
    fn reduced_input_shapes_follow_the_formula() {
        let spec = EncoderSpec::standard();
        let shapes = spec.trace_shapes::<3>(&[1, 3, 8, 64, 48]).unwrap();
        assert_eq!(shapes.last().unwrap().1, vec![1, 512, 8, 1, 1]);

        // an unpadded stride-2 stage collapses a 2-pixel axis to zero
        let mut tight = toy_spec();
        tight.stages[0].kernel = 3;
        let e = ConvSpec::<2> { padding: [0, 0], ..block_specs::<2>(&tight.stages[0]).0 };
        assert!(matches!(e.output_shape(&[1, 2, 2, 8]), Err(Error::Axis { axis: "H", .. })));
    }
}
