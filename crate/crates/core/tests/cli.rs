//! The `ebus3d` binary end to end, including its exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn ebus3d(args: &[&str], dir: &Path, threads: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ebus3d"));
    c.args(args).current_dir(dir).env_remove("EBUS3D_THREADS");
    if let Some(t) = threads {
        c.env("EBUS3D_THREADS", t);
    }
    c.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const TINY: &str = "variant = UDE
frame_width = 32
frame_height = 24
width_divisor = 16
fusion_dim = 32
patients = 4
epochs = 1
lr0 = 0.01
micro_batch = 4
seed = 2
";

#[test]
fn usage_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&ebus3d(&["--help"], d, None)), 0);
    assert_eq!(code(&ebus3d(&["frobnicate"], d, None)), 2);
    std::fs::write(d.join("bad.conf"), "variant = U\nno_such_key = 1\n").unwrap();
    let o = ebus3d(&["synth", "--config", "bad.conf"], d, None);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert_eq!(code(&ebus3d(&["synth", "--config", "missing.conf"], d, None)), 3);
    assert_eq!(code(&ebus3d(&["synth"], d, Some("zero"))), 2);
    // nothing preprocessed yet
    std::fs::write(d.join("tiny.conf"), TINY).unwrap();
    assert_eq!(code(&ebus3d(&["train", "--config", "tiny.conf"], d, None)), 3);
}

#[test]
fn pipeline_and_its_failure_modes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("tiny.conf"), TINY).unwrap();
    for cmd in ["synth", "preprocess", "train", "eval"] {
        let o = ebus3d(&[cmd, "--config", "tiny.conf"], d, Some("2"));
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["data/manifest.tsv", "slices/index.tsv", "run/final.ckpt", "run/train.log", "eval/metrics.csv", "eval/roc_lesion.csv"] {
        assert!(d.join(f).exists(), "{f}");
    }
    let o = ebus3d(&["eval", "--config", "tiny.conf", "--out", "eval2"], d, None);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(d.join("eval/metrics.csv")).unwrap(), std::fs::read(d.join("eval2/metrics.csv")).unwrap());

    // a U evaluation of the UDE checkpoint
    std::fs::write(d.join("u.conf"), format!("{TINY}variant = U\n")).unwrap();
    assert_eq!(code(&ebus3d(&["eval", "--config", "u.conf"], d, None)), 2);
    // a corrupt checkpoint
    std::fs::write(d.join("junk.ckpt"), b"not a checkpoint").unwrap();
    std::fs::write(d.join("junk.conf"), format!("{TINY}checkpoint = junk.ckpt\n")).unwrap();
    assert_eq!(code(&ebus3d(&["eval", "--config", "junk.conf"], d, None)), 3);
    // a step size that overflows the weights
    std::fs::write(d.join("blowup.conf"), format!("{TINY}lr0 = 1e38\nmomentum = 0.9\nepochs = 3\nrun = blowup\n")).unwrap();
    let o = ebus3d(&["train", "--config", "blowup.conf"], d, None);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}
