//! The four pipeline commands behind the `ebus3d` binary, plus the shared
//! run configuration.

pub mod config;
pub mod data;
pub mod eval;
pub mod train;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nets::Checkpoint;
use crate::preproc::{preprocess_dataset, Index, INDEX_FILE};
use crate::synth::manifest::{Manifest, MANIFEST_FILE};
use crate::synth::generate_dataset;

pub use config::RunConfig;
pub use eval::{evaluate, predict, Evaluation};
pub use train::{train, TrainReport};

pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const TRAIN_LOG: &str = "train.log";
pub const CONFIG_ECHO: &str = "config.txt";
pub const THREADS_VAR: &str = "EBUS3D_THREADS";

/// Size the global worker pool from `EBUS3D_THREADS` (default 1, which
/// keeps every run bit-reproducible). Returns the count in effect.
pub fn init_threads() -> Result<usize> {
    let n = match std::env::var(THREADS_VAR) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config {
                line: 0,
                detail: format!("{THREADS_VAR}={v:?} is not a positive integer"),
            })?,
        Err(_) => 1,
    };
    // A pool that already exists (tests, repeated calls) is left alone.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(rayon::current_num_threads())
}

/// Writes every line to a file and to stdout.
struct Tee {
    file: BufWriter<File>,
    echo: bool,
}

impl Write for Tee {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.file.write_all(buf)?;
        if self.echo {
            io::stdout().write_all(buf)?;
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.file.flush()
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Render the synthetic dataset into `out` (default: `cfg.dataset`).
pub fn cmd_synth(cfg: &RunConfig, out: Option<&Path>) -> Result<Manifest> {
    cfg.validate()?;
    generate_dataset(&cfg.synth_config(), out.unwrap_or(&cfg.dataset))
}

/// Slice `cfg.dataset` into `out` (default: `cfg.slices`).
pub fn cmd_preprocess(cfg: &RunConfig, out: Option<&Path>) -> Result<Index> {
    cfg.validate()?;
    let dir = out.unwrap_or(&cfg.slices);
    preprocess_dataset(&cfg.dataset.join(MANIFEST_FILE), dir, &cfg.preprocess_config())
}

/// Train and write `config.txt`, `train.log`, `best.ckpt` and `final.ckpt`
/// into the run directory.
pub fn cmd_train(cfg: &RunConfig, out: Option<&Path>, echo: bool) -> Result<TrainReport> {
    cfg.validate()?;
    let dir = out.unwrap_or(&cfg.run);
    create_dir(dir)?;
    let index = Index::read(&cfg.slices.join(INDEX_FILE))?;
    let text = cfg.to_text();
    let echo_path = dir.join(CONFIG_ECHO);
    std::fs::write(&echo_path, &text).map_err(|e| Error::io(&echo_path, e))?;
    let log_path = dir.join(TRAIN_LOG);
    let file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = Tee { file: BufWriter::new(file), echo };
    let io_err = |e| Error::io(&log_path, e);
    for line in text.lines() {
        writeln!(log, "# {line}").map_err(io_err)?;
    }
    let result = train(cfg, &index, &cfg.slices, Some(dir), &mut log);
    if let Err(e) = &result {
        writeln!(log, "# failed: {e}").map_err(io_err)?;
    }
    log.flush().map_err(io_err)?;
    result.map(|(_, report)| report)
}

/// Evaluate the configured checkpoint on `cfg.eval_split` and write the
/// metric files into the evaluation directory.
pub fn cmd_eval(cfg: &RunConfig, out: Option<&Path>) -> Result<Evaluation> {
    cfg.validate()?;
    let ckpt = Checkpoint::load(cfg.checkpoint_path())?;
    if ckpt.variant != cfg.variant {
        return Err(Error::Variant {
            variant: cfg.variant.name(),
            detail: format!("was requested but the checkpoint holds {}", ckpt.variant.name()),
        });
    }
    let model = ckpt.build::<f32>()?;
    let index = Index::read(&cfg.slices.join(INDEX_FILE))?;
    let shuffle_seed = cfg.shuffle_frames.then(|| cfg.data_seed());
    let ev = evaluate(&model, &index, &cfg.slices, cfg.eval_split, cfg.threshold, cfg.micro_batch, shuffle_seed)?;
    ev.write(out.unwrap_or(&cfg.eval_dir))?;
    Ok(ev)
}
