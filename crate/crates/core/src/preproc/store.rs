//! On-disk slices (`.f32` raw little-endian floats plus a `.hdr` text
//! sidecar) and the `index.tsv` listing everything a preprocessing run wrote.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::Label;
use crate::nets::GraphicSignal;
use crate::synth::Split;
use crate::tensor::Array;

use super::{ElastoImage, Frame, Mode, Slice};

pub const INDEX_FILE: &str = "index.tsv";
pub const INDEX_HEADER: &str = "#ebus-index v1";
const TENSOR_HEADER: &str = "#ebus-tensor v1";

/// Sidecar header path for a `.f32` file.
pub fn header_path(data: &Path) -> PathBuf {
    data.with_extension("hdr")
}

/// Write `array` as raw little-endian floats with a `key<TAB>value` sidecar.
pub fn write_tensor(path: &Path, array: &Array<f32>, fields: &[(&str, String)]) -> Result<()> {
    let mut bytes = Vec::with_capacity(4 * array.len());
    for v in array.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut hdr = format!("{TENSOR_HEADER}\nextents\t");
    let extents: Vec<String> = array.shape().iter().map(|e| e.to_string()).collect();
    hdr.push_str(&extents.join(" "));
    hdr.push('\n');
    for (k, v) in fields {
        let _ = writeln!(hdr, "{k}\t{v}");
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let hp = header_path(path);
    std::fs::write(&hp, hdr).map_err(|e| Error::io(&hp, e))
}

/// Read a tensor written by [`write_tensor`] and its header fields.
pub fn read_tensor(path: &Path) -> Result<(Array<f32>, BTreeMap<String, String>)> {
    let hp = header_path(path);
    let text = std::fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(TENSOR_HEADER) {
        return Err(Error::format(&hp, format!("missing `{TENSOR_HEADER}` header")));
    }
    let mut fields = BTreeMap::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(&hp, format!("malformed header line {line:?}")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let shape = fields
        .get("extents")
        .ok_or_else(|| Error::format(&hp, "no extents field"))?
        .split_whitespace()
        .map(|e| e.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::format(&hp, "bad extents"))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let n: usize = shape.iter().product();
    if bytes.len() != 4 * n {
        return Err(Error::format(
            path,
            format!("{} bytes for {n} floats", bytes.len()),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Ok((Array::new(shape, data)?, fields))
}

fn field<'a>(fields: &'a BTreeMap<String, String>, key: &str, path: &Path) -> Result<&'a str> {
    fields
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::format(header_path(path), format!("no {key} field")))
}

fn parse_signal(s: &str) -> Option<GraphicSignal> {
    let bits: Vec<&str> = s.strip_prefix('[')?.strip_suffix(']')?.split(',').collect();
    match bits.as_slice() {
        [a, b, c] => {
            let bit = |x: &str| match x.trim() {
                "0" => Some(false),
                "1" => Some(true),
                _ => None,
            };
            GraphicSignal::new(bit(a)?, bit(b)?, bit(c)?).ok()
        }
        _ => None,
    }
}

pub fn write_slice(path: &Path, slice: &Slice) -> Result<()> {
    write_tensor(
        path,
        &slice.volume,
        &[
            ("mode", slice.mode.to_string()),
            ("lesion", slice.lesion_id.clone()),
            ("clip_start", slice.clip_start.to_string()),
            ("signal", slice.signal.to_string()),
        ],
    )
}

pub fn read_slice(path: &Path) -> Result<Slice> {
    let (volume, fields) = read_tensor(path)?;
    let bad = |d: &str| Error::format(header_path(path), d);
    if volume.rank() != 4 || volume.shape()[0] != 3 {
        return Err(bad("slice extents must be 3×T×H×W"));
    }
    Ok(Slice {
        volume,
        signal: parse_signal(field(&fields, "signal", path)?).ok_or_else(|| bad("bad signal"))?,
        mode: field(&fields, "mode", path)?.parse()?,
        lesion_id: field(&fields, "lesion", path)?.to_string(),
        clip_start: field(&fields, "clip_start", path)?
            .parse()
            .map_err(|_| bad("bad clip_start"))?,
    })
}

pub fn write_elasto(path: &Path, lesion_id: &str, image: &ElastoImage) -> Result<()> {
    let frame = image
        .frame
        .as_ref()
        .ok_or_else(|| Error::invalid("the zero matrix is implied, never stored"))?;
    let array = image.to_array(frame.width(), frame.height())?;
    write_tensor(
        path,
        &array,
        &[
            ("mode", Mode::Elastography.to_string()),
            ("lesion", lesion_id.to_string()),
            ("frame_index", image.frame_index.unwrap_or(0).to_string()),
            ("coverage", image.coverage.to_string()),
        ],
    )
}

pub fn read_elasto(path: &Path) -> Result<ElastoImage> {
    let (array, fields) = read_tensor(path)?;
    let bad = |d: &str| Error::format(header_path(path), d);
    let (h, w) = match array.shape() {
        [3, h, w] => (*h, *w),
        _ => return Err(bad("elastography extents must be 3×H×W")),
    };
    Ok(ElastoImage {
        frame: Some(Frame::new(w, h, array.into_data())?),
        frame_index: Some(
            field(&fields, "frame_index", path)?
                .parse()
                .map_err(|_| bad("bad frame_index"))?,
        ),
        coverage: field(&fields, "coverage", path)?
            .parse()
            .map_err(|_| bad("bad coverage"))?,
    })
}

/// Per-lesion summary row.
#[derive(Clone, Debug, PartialEq)]
pub struct LesionEntry {
    pub lesion_id: String,
    pub patient_id: String,
    pub split: Split,
    pub label: Label,
    pub grayscale_slices: usize,
    pub doppler_slices: usize,
    pub elasto_images: usize,
}

impl LesionEntry {
    /// No grayscale clip could be cut, so grayscale-only evaluation skips it.
    pub fn excluded_u(&self) -> bool {
        self.grayscale_slices == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SliceEntry {
    pub lesion_id: String,
    pub split: Split,
    pub mode: Mode,
    pub clip_start: f64,
    pub signal: GraphicSignal,
    /// Relative to the index directory.
    pub path: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElastoEntry {
    pub lesion_id: String,
    pub split: Split,
    pub frame_index: usize,
    pub coverage: f64,
    pub path: String,
}

/// Everything a preprocessing run produced, in manifest order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Index {
    pub lesions: Vec<LesionEntry>,
    pub slices: Vec<SliceEntry>,
    pub elasto: Vec<ElastoEntry>,
}

impl Index {
    pub fn lesion(&self, id: &str) -> Option<&LesionEntry> {
        self.lesions.iter().find(|l| l.lesion_id == id)
    }

    pub fn elasto_for<'a>(&'a self, lesion_id: &'a str) -> impl Iterator<Item = &'a ElastoEntry> + 'a {
        self.elasto.iter().filter(move |e| e.lesion_id == lesion_id)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        s.push_str(INDEX_HEADER);
        s.push('\n');
        s.push_str("#lesion\tlesion_id\tpatient_id\tsplit\tlabel\tgrayscale_slices\tdoppler_slices\telasto_images\texcluded_u\n");
        s.push_str("#slice\tlesion_id\tsplit\tmode\tclip_start\tsignal\tpath\n");
        s.push_str("#elasto\tlesion_id\tsplit\tframe_index\tcoverage\tpath\n");
        for l in &self.lesions {
            let _ = writeln!(
                s,
                "lesion\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                l.lesion_id,
                l.patient_id,
                l.split,
                l.label.as_u8(),
                l.grayscale_slices,
                l.doppler_slices,
                l.elasto_images,
                u8::from(l.excluded_u())
            );
        }
        for e in &self.slices {
            let _ = writeln!(
                s,
                "slice\t{}\t{}\t{}\t{}\t{}\t{}",
                e.lesion_id, e.split, e.mode, e.clip_start, e.signal, e.path
            );
        }
        for e in &self.elasto {
            let _ = writeln!(
                s,
                "elasto\t{}\t{}\t{}\t{}\t{}",
                e.lesion_id, e.split, e.frame_index, e.coverage, e.path
            );
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(INDEX_FILE);
        std::fs::write(&path, self.to_tsv()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == INDEX_HEADER => {}
            _ => return Err(Error::format(path, format!("missing `{INDEX_HEADER}` header"))),
        }
        let mut index = Index::default();
        for (no, line) in lines {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::format(path, format!("line {}: {what}", no + 1));
            let cols: Vec<&str> = line.split('\t').collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad("expected a count"));
            match cols.as_slice() {
                ["lesion", id, patient, split, label, g, d, e, _excluded] => {
                    index.lesions.push(LesionEntry {
                        lesion_id: id.to_string(),
                        patient_id: patient.to_string(),
                        split: split.parse().map_err(|_| bad("bad split"))?,
                        label: label.parse().map_err(|_| bad("bad label"))?,
                        grayscale_slices: num(g)?,
                        doppler_slices: num(d)?,
                        elasto_images: num(e)?,
                    })
                }
                ["slice", id, split, mode, start, signal, p] => index.slices.push(SliceEntry {
                    lesion_id: id.to_string(),
                    split: split.parse().map_err(|_| bad("bad split"))?,
                    mode: mode.parse().map_err(|_| bad("bad mode"))?,
                    clip_start: start.parse().map_err(|_| bad("bad clip start"))?,
                    signal: parse_signal(signal).ok_or_else(|| bad("bad signal"))?,
                    path: p.to_string(),
                }),
                ["elasto", id, split, fi, cov, p] => index.elasto.push(ElastoEntry {
                    lesion_id: id.to_string(),
                    split: split.parse().map_err(|_| bad("bad split"))?,
                    frame_index: num(fi)?,
                    coverage: cov.parse().map_err(|_| bad("bad coverage"))?,
                    path: p.to_string(),
                }),
                _ => return Err(bad("unrecognized record")),
            }
        }
        Ok(index)
    }
}
