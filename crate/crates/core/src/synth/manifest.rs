//! `manifest.tsv`: one row per recorded segment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::Label;
use crate::preproc::{frame_file_name, Mode, VideoSegment};

use super::Split;

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const MANIFEST_HEADER: &str = "#ebus-synth v1";
const COLUMNS: &str = "#patient_id\tsplit\tlesion_id\tlabel\tmode\tfps\tn_frames\trel_path";

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentEntry {
    pub mode: Mode,
    pub fps: f64,
    pub n_frames: usize,
    pub rel_path: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LesionRecord {
    pub id: String,
    pub label: Label,
    pub segments: Vec<SegmentEntry>,
}

impl LesionRecord {
    pub fn segment(&self, mode: Mode) -> Option<&SegmentEntry> {
        self.segments.iter().find(|s| s.mode == mode)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    pub split: Split,
    pub lesions: Vec<LesionRecord>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub patients: Vec<PatientRecord>,
}

/// What [`validate_manifest`] found wrong.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    MissingFile(PathBuf),
    DuplicateLesionId(String),
    DuplicateSegment { lesion_id: String, mode: Mode },
    MixedSplit(String),
    EmptySegment { lesion_id: String, mode: Mode },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingFile(p) => write!(f, "missing file {}", p.display()),
            Violation::DuplicateLesionId(id) => write!(f, "duplicate lesion id {id}"),
            Violation::DuplicateSegment { lesion_id, mode } => {
                write!(f, "lesion {lesion_id} lists its {mode} segment twice")
            }
            Violation::MixedSplit(p) => write!(f, "patient {p} has lesions in both splits"),
            Violation::EmptySegment { lesion_id, mode } => {
                write!(f, "lesion {lesion_id} has an empty {mode} segment")
            }
        }
    }
}

/// One parsed manifest row.
#[derive(Clone, Debug, PartialEq)]
struct Row {
    patient: String,
    split: Split,
    lesion: String,
    label: Label,
    segment: SegmentEntry,
}

impl Manifest {
    pub fn lesions(&self) -> impl Iterator<Item = (&PatientRecord, &LesionRecord)> {
        self.patients
            .iter()
            .flat_map(|p| p.lesions.iter().map(move |l| (p, l)))
    }

    pub fn lesion_count(&self) -> usize {
        self.patients.iter().map(|p| p.lesions.len()).sum()
    }

    /// Segment of `lesion` with paths resolved against the dataset `root`.
    pub fn video_segment(
        root: &Path,
        patient: &PatientRecord,
        lesion: &LesionRecord,
        seg: &SegmentEntry,
    ) -> VideoSegment {
        VideoSegment {
            lesion_id: lesion.id.clone(),
            patient_id: patient.id.clone(),
            mode: seg.mode,
            fps: seg.fps,
            n_frames: seg.n_frames,
            dir: root.join(&seg.rel_path),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut s = format!("{MANIFEST_HEADER}\n{COLUMNS}\n");
        for (p, l) in self.lesions() {
            for seg in &l.segments {
                let _ = writeln!(
                    s,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    p.id,
                    p.split,
                    l.id,
                    l.label.as_u8(),
                    seg.mode,
                    seg.fps,
                    seg.n_frames,
                    seg.rel_path
                );
            }
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_tsv()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::group(parse_rows(&text, path)?))
    }

    /// Regroup rows into patients and lesions, keeping first-appearance
    /// order; a patient takes the split of its first row.
    fn group(rows: Vec<Row>) -> Self {
        let mut m = Manifest::default();
        for r in rows {
            let pi = match m.patients.iter().position(|p| p.id == r.patient) {
                Some(i) => i,
                None => {
                    m.patients.push(PatientRecord {
                        id: r.patient.clone(),
                        split: r.split,
                        lesions: Vec::new(),
                    });
                    m.patients.len() - 1
                }
            };
            let p = &mut m.patients[pi];
            match p.lesions.iter_mut().find(|l| l.id == r.lesion && l.label == r.label) {
                Some(l) => l.segments.push(r.segment),
                None => p.lesions.push(LesionRecord {
                    id: r.lesion,
                    label: r.label,
                    segments: vec![r.segment],
                }),
            }
        }
        m
    }

    /// Structural violations, without touching the file system.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for p in &self.patients {
            for l in &p.lesions {
                if !seen.insert(l.id.clone()) {
                    out.push(Violation::DuplicateLesionId(l.id.clone()));
                }
                let mut modes = BTreeSet::new();
                for s in &l.segments {
                    if !modes.insert(s.mode) {
                        out.push(Violation::DuplicateSegment {
                            lesion_id: l.id.clone(),
                            mode: s.mode,
                        });
                    }
                    if s.n_frames == 0 {
                        out.push(Violation::EmptySegment {
                            lesion_id: l.id.clone(),
                            mode: s.mode,
                        });
                    }
                }
            }
        }
        out
    }
}

fn parse_rows(text: &str, path: &Path) -> Result<Vec<Row>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == MANIFEST_HEADER => {}
        _ => return Err(Error::format(path, format!("missing `{MANIFEST_HEADER}` header"))),
    }
    let mut rows = Vec::new();
    for (no, line) in lines {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: String| Error::format(path, format!("line {}: {what}", no + 1));
        let cols: Vec<&str> = line.split('\t').collect();
        let [patient, split, lesion, label, mode, fps, n, rel] = cols.as_slice() else {
            return Err(bad(format!("expected 8 tab-separated columns, found {}", cols.len())));
        };
        let fps: f64 = fps.parse().map_err(|_| bad(format!("bad fps {fps:?}")))?;
        if !(fps > 0.0) {
            return Err(bad("fps must be positive".into()));
        }
        rows.push(Row {
            patient: patient.to_string(),
            split: split.parse().map_err(|e: Error| bad(e.to_string()))?,
            lesion: lesion.to_string(),
            label: label.parse().map_err(|e: Error| bad(e.to_string()))?,
            segment: SegmentEntry {
                mode: mode.parse().map_err(|e: Error| bad(e.to_string()))?,
                fps,
                n_frames: n.parse().map_err(|_| bad(format!("bad frame count {n:?}")))?,
                rel_path: rel.to_string(),
            },
        });
    }
    Ok(rows)
}

/// Check a manifest file and the frames it references; an empty list means
/// the dataset is valid.
pub fn validate_manifest(path: &Path) -> Result<Vec<Violation>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = parse_rows(&text, path)?;
    let root = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    // the same lesion id under two patients or labels
    let mut owner: BTreeMap<&str, (&str, Label)> = BTreeMap::new();
    let mut splits: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
    for r in &rows {
        splits.entry(&r.patient).or_default().insert(r.split);
        if let Some(&(p, l)) = owner.get(r.lesion.as_str()) {
            if p != r.patient || l != r.label {
                out.push(Violation::DuplicateLesionId(r.lesion.clone()));
            }
        } else {
            owner.insert(&r.lesion, (&r.patient, r.label));
        }
    }
    for (p, s) in &splits {
        if s.len() > 1 {
            out.push(Violation::MixedSplit(p.to_string()));
        }
    }
    let manifest = Manifest::group(rows.clone());
    for v in manifest.violations() {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    for r in &rows {
        let dir = root.join(&r.segment.rel_path);
        for i in 0..r.segment.n_frames {
            let f = dir.join(frame_file_name(i));
            if !f.is_file() {
                out.push(Violation::MissingFile(f));
            }
        }
    }
    Ok(out)
}

/// Shuffle patients with `seed` and send `round(fraction·n)` of them (at
/// least one each way) to training. Reshuffles, up to a fixed budget, until
/// both splits hold both classes.
pub fn split_by_patient(manifest: &Manifest, train_fraction: f64, seed: u64) -> Result<Manifest> {
    let n = manifest.patients.len();
    if n < 2 {
        return Err(Error::invalid(format!("a patient-level split needs at least 2 patients, got {n}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction {train_fraction} is outside (0, 1)")));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let classes = |ps: &[usize]| {
        let mut seen = BTreeSet::new();
        for &i in ps {
            seen.extend(manifest.patients[i].lesions.iter().map(|l| l.label));
        }
        seen.len()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let first = order.clone();
    let mut found = false;
    for _ in 0..256 {
        let (tr, va) = order.split_at(n_train);
        if classes(tr) == 2 && classes(va) == 2 {
            found = true;
            break;
        }
        order.shuffle(&mut rng);
    }
    if !found {
        order = first;
    }
    let train: BTreeSet<usize> = order[..n_train].iter().copied().collect();
    let mut out = manifest.clone();
    for (i, p) in out.patients.iter_mut().enumerate() {
        p.split = if train.contains(&i) {
            Split::Train
        } else {
            Split::Validation
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy(patients: usize) -> Manifest {
        Manifest {
            patients: (0..patients)
                .map(|p| PatientRecord {
                    id: format!("P{p:03}"),
                    split: Split::Unassigned,
                    lesions: (0..2)
                        .map(|l| LesionRecord {
                            id: format!("L{p:03}{l}"),
                            label: Label::from_u8(((p + l) % 2) as u8).unwrap(),
                            segments: vec![SegmentEntry {
                                mode: Mode::Grayscale,
                                fps: 4.0,
                                n_frames: 1,
                                rel_path: format!("P{p:03}/L{p:03}{l}/grayscale"),
                            }],
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn split_counts_and_disjointness() {
        let m = split_by_patient(&toy(10), 0.7, 3).unwrap();
        let train = m.patients.iter().filter(|p| p.split == Split::Train).count();
        assert_eq!(train, 7);
        assert!(m.patients.iter().all(|p| p.split != Split::Unassigned));
        assert!(split_by_patient(&toy(1), 0.7, 3).is_err());
        assert_eq!(split_by_patient(&toy(10), 0.7, 3).unwrap(), m);
    }

    #[test]
    fn tsv_round_trip() {
        let m = split_by_patient(&toy(3), 0.5, 1).unwrap();
        let text = m.to_tsv();
        assert!(text.starts_with("#ebus-synth v1\n"));
        let rows = parse_rows(&text, Path::new("m")).unwrap();
        assert_eq!(Manifest::group(rows), m);
        assert!(parse_rows("#ebus-synth v1\nP1\ttrain\n", Path::new("m")).is_err());
        assert!(parse_rows("P1", Path::new("m")).is_err());
    }

    #[test]
    fn structural_violations() {
        let mut m = toy(2);
        m.patients[1].lesions[0].id = m.patients[0].lesions[0].id.clone();
        let seg = m.patients[0].lesions[1].segments[0].clone();
        m.patients[0].lesions[1].segments.push(seg);
        let v = m.violations();
        assert!(v.contains(&Violation::DuplicateLesionId("L0000".into())));
        assert!(v.iter().any(|v| matches!(v, Violation::DuplicateSegment { .. })));
    }
}
