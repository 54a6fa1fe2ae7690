use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ebus3d::app::{self, RunConfig};
use ebus3d::Result;

#[derive(Parser)]
#[command(name = "ebus3d", version, about = "Synthetic EBUS data, preprocessing, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// `key = value` run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for this command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Render a synthetic multi-modal dataset and its manifest.
    Synth,
    /// Crop, segment and sample the dataset into slices plus an index.
    Preprocess,
    /// Train the configured variant and write checkpoints.
    Train,
    /// Score a checkpoint and write metrics, ROC curves and score dumps.
    Eval,
}

fn run(cli: &Cli) -> Result<()> {
    app::init_threads()?;
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Synth => {
            let m = app::cmd_synth(&cfg, out)?;
            println!("{} patients, {} lesions", m.patients.len(), m.lesion_count());
        }
        Command::Preprocess => {
            let index = app::cmd_preprocess(&cfg, out)?;
            let excluded = index.lesions.iter().filter(|l| l.excluded_u()).count();
            println!(
                "{} lesions, {} slices, {} elastography images; {excluded} lesions without a grayscale clip",
                index.lesions.len(),
                index.slices.len(),
                index.elasto.len()
            );
        }
        Command::Train => {
            let r = app::cmd_train(&cfg, out, true)?;
            println!("{} optimizer steps over {} training slices", r.steps.len(), r.train_samples);
        }
        Command::Eval => print!("{}", app::cmd_eval(&cfg, out)?.summary()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ebus3d: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
