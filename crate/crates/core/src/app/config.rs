//! `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys and malformed
//! values are errors that name the offending line. [`RunConfig::to_text`]
//! prints every knob, so a run log can echo the effective configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nets::{ModelConfig, ModelVariant, FUSION_DIM};
use crate::preproc::{AugmentConfig, ChromaThresholds, PreprocessConfig, CROP_HEIGHT, CROP_WIDTH};
use crate::synth::{SignalKind, Split, SynthConfig};
use crate::tensor::optim::DEFAULT_ACCUMULATION;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub variant: ModelVariant,
    pub lr0: f64,
    pub accumulation: usize,
    pub epochs: usize,
    pub momentum: f64,
    /// Slices per forward pass; a divisor of `accumulation` keeps update
    /// windows exact.
    pub micro_batch: usize,
    /// Divides every encoder channel count (1 = full width).
    pub width_divisor: usize,
    pub fusion_dim: usize,
    pub threshold: f64,
    pub frame_width: usize,
    pub frame_height: usize,
    pub crop_x: usize,
    pub crop_y: usize,
    pub synth: SynthConfig,
    pub augment: bool,
    pub augment_params: AugmentConfig,
    pub chroma: ChromaThresholds,
    /// Permute the frames of every slice (temporal-order control).
    pub shuffle_frames: bool,
    pub seed: u64,
    pub data_seed: Option<u64>,
    pub init_seed: Option<u64>,
    pub augment_seed: Option<u64>,
    pub eval_every: usize,
    pub eval_split: Split,
    pub dataset: PathBuf,
    pub slices: PathBuf,
    pub run: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub eval_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: ModelVariant::UDE,
            lr0: 1e-4,
            accumulation: DEFAULT_ACCUMULATION,
            epochs: 30,
            momentum: 0.0,
            micro_batch: 1,
            width_divisor: 1,
            fusion_dim: FUSION_DIM,
            threshold: 0.5,
            frame_width: CROP_WIDTH,
            frame_height: CROP_HEIGHT,
            crop_x: 0,
            crop_y: 0,
            synth: SynthConfig::default(),
            augment: true,
            augment_params: AugmentConfig::default(),
            chroma: ChromaThresholds::default(),
            shuffle_frames: false,
            seed: 0,
            data_seed: None,
            init_seed: None,
            augment_seed: None,
            eval_every: 1,
            eval_split: Split::Validation,
            dataset: "data".into(),
            slices: "slices".into(),
            run: "run".into(),
            checkpoint: None,
            eval_dir: "eval".into(),
        }
    }
}

fn parse<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

fn show_opt(v: Option<u64>) -> String {
    v.map_or_else(|| "auto".into(), |s| s.to_string())
}

fn parse_opt(v: &str) -> std::result::Result<Option<u64>, String> {
    if v == "auto" {
        Ok(None)
    } else {
        parse(v).map(Some)
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fail = |detail: String| Error::Config {
                line: no + 1,
                detail,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| fail(format!("expected `key = value`, got {line:?}")))?;
            cfg.set(k.trim(), v.trim()).map_err(fail)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Set one knob by name.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let s = &mut self.synth;
        let a = &mut self.augment_params;
        match key {
            "variant" => self.variant = v.parse().map_err(|e: Error| e.to_string())?,
            "lr0" => self.lr0 = parse(v)?,
            "accumulation" => self.accumulation = parse(v)?,
            "epochs" => self.epochs = parse(v)?,
            "momentum" => self.momentum = parse(v)?,
            "micro_batch" => self.micro_batch = parse(v)?,
            "width_divisor" => self.width_divisor = parse(v)?,
            "fusion_dim" => self.fusion_dim = parse(v)?,
            "threshold" => self.threshold = parse(v)?,
            "frame_width" => self.frame_width = parse(v)?,
            "frame_height" => self.frame_height = parse(v)?,
            "crop_x" => self.crop_x = parse(v)?,
            "crop_y" => self.crop_y = parse(v)?,
            "patients" => s.patients = parse(v)?,
            "lesions_min" => s.lesions_per_patient.0 = parse(v)?,
            "lesions_max" => s.lesions_per_patient.1 = parse(v)?,
            "malignant_fraction" => s.malignant_fraction = parse(v)?,
            "fps" => s.fps = parse(v)?,
            "duration_min" => s.duration.0 = parse(v)?,
            "duration_max" => s.duration.1 = parse(v)?,
            "elasto_duration_min" => s.elasto_duration.0 = parse(v)?,
            "elasto_duration_max" => s.elasto_duration.1 = parse(v)?,
            "p_doppler" => s.p_doppler = parse(v)?,
            "p_elastography" => s.p_elastography = parse(v)?,
            "signal" => s.signal = v.parse().map_err(|e: Error| e.to_string())?,
            "train_fraction" => s.train_fraction = parse(v)?,
            "augment" => self.augment = parse_bool(v)?,
            "p_flip" => a.p_flip = parse(v)?,
            "p_noise" => a.p_noise = parse(v)?,
            "noise_sigma" => a.noise_sigma = parse(v)?,
            "p_blur" => a.p_blur = parse(v)?,
            "blur_kernel" => a.blur_kernel = parse(v)?,
            "blur_sigma_min" => a.blur_sigma.0 = parse(v)?,
            "blur_sigma_max" => a.blur_sigma.1 = parse(v)?,
            "min_saturation" => self.chroma.min_saturation = parse(v)?,
            "min_value" => self.chroma.min_value = parse(v)?,
            "shuffle_frames" => self.shuffle_frames = parse_bool(v)?,
            "seed" => self.seed = parse(v)?,
            "data_seed" => self.data_seed = parse_opt(v)?,
            "init_seed" => self.init_seed = parse_opt(v)?,
            "augment_seed" => self.augment_seed = parse_opt(v)?,
            "eval_every" => self.eval_every = parse(v)?,
            "eval_split" => self.eval_split = v.parse().map_err(|e: Error| e.to_string())?,
            "dataset" => self.dataset = v.into(),
            "slices" => self.slices = v.into(),
            "run" => self.run = v.into(),
            "checkpoint" => self.checkpoint = (v != "auto").then(|| v.into()),
            "eval_dir" => self.eval_dir = v.into(),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Every knob as `key = value` lines, in a fixed order; parsing the
    /// result reproduces the config.
    pub fn to_text(&self) -> String {
        let s = &self.synth;
        let a = &self.augment_params;
        let p = |p: &Path| p.display().to_string();
        let rows: Vec<(&str, String)> = vec![
            ("variant", self.variant.short().into()),
            ("lr0", self.lr0.to_string()),
            ("accumulation", self.accumulation.to_string()),
            ("epochs", self.epochs.to_string()),
            ("momentum", self.momentum.to_string()),
            ("micro_batch", self.micro_batch.to_string()),
            ("width_divisor", self.width_divisor.to_string()),
            ("fusion_dim", self.fusion_dim.to_string()),
            ("threshold", self.threshold.to_string()),
            ("frame_width", self.frame_width.to_string()),
            ("frame_height", self.frame_height.to_string()),
            ("crop_x", self.crop_x.to_string()),
            ("crop_y", self.crop_y.to_string()),
            ("patients", s.patients.to_string()),
            ("lesions_min", s.lesions_per_patient.0.to_string()),
            ("lesions_max", s.lesions_per_patient.1.to_string()),
            ("malignant_fraction", s.malignant_fraction.to_string()),
            ("fps", s.fps.to_string()),
            ("duration_min", s.duration.0.to_string()),
            ("duration_max", s.duration.1.to_string()),
            ("elasto_duration_min", s.elasto_duration.0.to_string()),
            ("elasto_duration_max", s.elasto_duration.1.to_string()),
            ("p_doppler", s.p_doppler.to_string()),
            ("p_elastography", s.p_elastography.to_string()),
            ("signal", s.signal.to_string()),
            ("train_fraction", s.train_fraction.to_string()),
            ("augment", self.augment.to_string()),
            ("p_flip", a.p_flip.to_string()),
            ("p_noise", a.p_noise.to_string()),
            ("noise_sigma", a.noise_sigma.to_string()),
            ("p_blur", a.p_blur.to_string()),
            ("blur_kernel", a.blur_kernel.to_string()),
            ("blur_sigma_min", a.blur_sigma.0.to_string()),
            ("blur_sigma_max", a.blur_sigma.1.to_string()),
            ("min_saturation", self.chroma.min_saturation.to_string()),
            ("min_value", self.chroma.min_value.to_string()),
            ("shuffle_frames", self.shuffle_frames.to_string()),
            ("seed", self.seed.to_string()),
            ("data_seed", show_opt(self.data_seed)),
            ("init_seed", show_opt(self.init_seed)),
            ("augment_seed", show_opt(self.augment_seed)),
            ("eval_every", self.eval_every.to_string()),
            ("eval_split", self.eval_split.to_string()),
            ("dataset", p(&self.dataset)),
            ("slices", p(&self.slices)),
            ("run", p(&self.run)),
            ("checkpoint", self.checkpoint.as_deref().map_or_else(|| "auto".into(), p)),
            ("eval_dir", p(&self.eval_dir)),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if !(self.lr0 > 0.0) {
            return bad(format!("lr0 {} must be positive", self.lr0));
        }
        if self.accumulation == 0 || self.micro_batch == 0 || self.eval_every == 0 {
            return bad("accumulation, micro_batch and eval_every must be positive".into());
        }
        if self.width_divisor == 0 || self.fusion_dim == 0 {
            return bad("width_divisor and fusion_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        self.synth_config().validate()?;
        self.augment_config().validate()?;
        Ok(())
    }

    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed.unwrap_or(self.seed.wrapping_add(1))
    }

    pub fn augment_seed(&self) -> u64 {
        self.augment_seed.unwrap_or(self.seed.wrapping_add(2))
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            width: self.frame_width + self.crop_x,
            height: self.frame_height + self.crop_y,
            seed: self.data_seed(),
            ..self.synth.clone()
        }
    }

    pub fn preprocess_config(&self) -> PreprocessConfig {
        PreprocessConfig {
            crop_origin: (self.crop_x, self.crop_y),
            crop_size: (self.frame_width, self.frame_height),
            chroma: self.chroma,
            ..PreprocessConfig::default()
        }
    }

    pub fn augment_config(&self) -> AugmentConfig {
        let base = if self.augment {
            self.augment_params
        } else {
            AugmentConfig {
                blur_kernel: self.augment_params.blur_kernel,
                blur_sigma: self.augment_params.blur_sigma,
                noise_sigma: self.augment_params.noise_sigma,
                ..AugmentConfig::disabled()
            }
        };
        AugmentConfig {
            seed: self.augment_seed(),
            ..base
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            fusion_dim: self.fusion_dim,
            ..ModelConfig::narrowed(self.variant, self.width_divisor)
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.run.join(super::FINAL_CHECKPOINT))
    }

    pub fn signal_kind(&self) -> SignalKind {
        self.synth.signal
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_training_recipe() {
        let c = RunConfig::default();
        assert_eq!((c.lr0, c.accumulation, c.threshold), (1e-4, 12, 0.5));
        assert_eq!(c.epochs, 30);
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::parse("variant = UD\n# comment\nepochs = 3 # trailing\nseed=7\n").unwrap();
        assert_eq!((c.variant, c.epochs, c.seed), (ModelVariant::UD, 3, 7));
        c.checkpoint = Some("x/y.ckpt".into());
        c.data_seed = Some(11);
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn errors_name_the_line() {
        match RunConfig::parse("epochs = 3\nthis line is wrong\n") {
            Err(Error::Config { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(RunConfig::parse("bogus = 1"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(RunConfig::parse("epochs = many"), Err(Error::Config { line: 1, .. })));
        assert!(RunConfig::parse("momentum = 1.5").is_err());
    }
}
