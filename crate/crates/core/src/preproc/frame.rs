//! Video frames, binary PPM files and chromatic coverage.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};

/// Post-crop frame extents.
pub const CROP_WIDTH: usize = 704;
pub const CROP_HEIGHT: usize = 576;

/// An RGB frame with planar `3×H×W` values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != 3 * width * height {
            return Err(Error::shape(format!(
                "frame {width}×{height} needs {} values, got {}",
                3 * width * height,
                data.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let plane = width * height;
        let mut data = vec![0.0; 3 * plane];
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for (c, v) in px.into_iter().enumerate() {
                    data[c * plane + y * width + x] = v;
                }
            }
        }
        Frame {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Planar `3×H×W` values.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let plane = self.width * self.height;
        let i = y * self.width + x;
        [self.data[i], self.data[plane + i], self.data[2 * plane + i]]
    }

    /// Read an 8-bit binary PPM (`P6`), scaling intensities by 1/255.
    pub fn read_ppm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let bad = |d: &str| Error::format(path, d);
        let mut fields = Vec::with_capacity(4);
        let mut token = Vec::new();
        // header: magic, width, height, maxval, separated by whitespace and `#` comments
        while fields.len() < 4 {
            let mut byte = [0u8];
            if r.read(&mut byte).map_err(|e| Error::io(path, e))? == 0 {
                return Err(bad("truncated PPM header"));
            }
            match byte[0] {
                b'#' if token.is_empty() => {
                    let mut skip = Vec::new();
                    r.read_until(b'\n', &mut skip).map_err(|e| Error::io(path, e))?;
                }
                c if c.is_ascii_whitespace() => {
                    if !token.is_empty() {
                        fields.push(String::from_utf8_lossy(&token).into_owned());
                        token.clear();
                    }
                }
                c => token.push(c),
            }
        }
        if fields[0] != "P6" {
            return Err(bad("not a binary PPM (P6) file"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("malformed PPM header"));
        let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 || w == 0 || h == 0 {
            return Err(bad("only non-empty 8-bit PPM files are supported"));
        }
        let mut raw = vec![0u8; 3 * w * h];
        r.read_exact(&mut raw)
            .map_err(|_| bad("PPM pixel data is truncated"))?;
        let plane = w * h;
        let mut data = vec![0.0; 3 * plane];
        for (i, px) in raw.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + i] = px[c] as f32 / 255.0;
            }
        }
        Frame::new(w, h, data)
    }

    /// 8-bit binary PPM bytes, rounding intensities to the nearest level.
    pub fn to_ppm(&self) -> Vec<u8> {
        let header = format!("P6\n{} {}\n255\n", self.width, self.height);
        let plane = self.width * self.height;
        let mut out = Vec::with_capacity(header.len() + 3 * plane);
        out.extend_from_slice(header.as_bytes());
        for i in 0..plane {
            for c in 0..3 {
                out.push(quantize(self.data[c * plane + i]));
            }
        }
        out
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    /// Mirror along the horizontal axis.
    pub fn flipped(&self) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.width) {
            row.reverse();
        }
        Frame { data, ..*self }
    }
}

/// Nearest 8-bit level of an intensity in [0, 1].
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Window of `size = (width, height)` pixels at `origin = (x, y)`.
pub fn crop_frame(raw: &Frame, origin: (usize, usize), size: (usize, usize)) -> Result<Frame> {
    let ((x0, y0), (w, h)) = (origin, size);
    if w == 0 || h == 0 || x0 + w > raw.width || y0 + h > raw.height {
        return Err(Error::invalid(format!(
            "crop window {w}×{h} at ({x0},{y0}) exceeds the {}×{} frame",
            raw.width, raw.height
        )));
    }
    let (plane, out_plane) = (raw.width * raw.height, w * h);
    let mut data = vec![0.0; 3 * out_plane];
    for c in 0..3 {
        for y in 0..h {
            let src = c * plane + (y0 + y) * raw.width + x0;
            let dst = c * out_plane + y * w;
            data[dst..dst + w].copy_from_slice(&raw.data[src..src + w]);
        }
    }
    Frame::new(w, h, data)
}

/// HSV thresholds deciding whether a pixel is chromatic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChromaThresholds {
    pub min_saturation: f32,
    pub min_value: f32,
}

impl Default for ChromaThresholds {
    fn default() -> Self {
        ChromaThresholds {
            min_saturation: 0.3,
            min_value: 0.2,
        }
    }
}

/// HSV saturation and value of an RGB pixel.
pub fn saturation_value([r, g, b]: [f32; 3]) -> (f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let s = if max > 0.0 { (max - min) / max } else { 0.0 };
    (s, max)
}

/// Fraction of pixels with saturation and value above the thresholds.
pub fn coverage_area(frame: &Frame, t: ChromaThresholds) -> f64 {
    let plane = frame.width * frame.height;
    let (r, rest) = frame.data.split_at(plane);
    let (g, b) = rest.split_at(plane);
    let hits = (0..plane)
        .filter(|&i| {
            let (s, v) = saturation_value([r[i], g[i], b[i]]);
            s > t.min_saturation && v > t.min_value
        })
        .count();
    hits as f64 / plane as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_windows_and_bounds() {
        let raw = Frame::from_fn(1024, 768, |x, y| [x as f32 / 1024.0, y as f32 / 768.0, 0.5]);
        let c = crop_frame(&raw, (100, 50), (CROP_WIDTH, CROP_HEIGHT)).unwrap();
        assert_eq!((c.width(), c.height()), (704, 576));
        assert_eq!(c.pixel(0, 0), raw.pixel(100, 50));
        assert_eq!(c.pixel(703, 575), raw.pixel(803, 625));
        assert!(crop_frame(&raw, (400, 300), (CROP_WIDTH, CROP_HEIGHT)).is_err());
        let flat = crop_frame(&Frame::filled(1024, 768, [0.3; 3]), (7, 9), (704, 576)).unwrap();
        assert!(flat.data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn coverage_examples() {
        let t = ChromaThresholds::default();
        assert_eq!(coverage_area(&Frame::filled(8, 4, [0.6; 3]), t), 0.0);
        assert_eq!(coverage_area(&Frame::filled(8, 4, [1.0, 0.0, 0.0]), t), 1.0);
        let half = Frame::from_fn(8, 4, |x, _| if x < 4 { [1.0, 0.0, 0.0] } else { [0.5; 3] });
        assert_eq!(coverage_area(&half, t), 0.5);
        // dark saturated pixels fail the value threshold
        assert_eq!(coverage_area(&Frame::filled(2, 2, [0.1, 0.0, 0.0]), t), 0.0);
    }

    #[test]
    fn ppm_round_trip_on_levels() {
        let f = Frame::from_fn(5, 3, |x, y| [x as f32 / 255.0, y as f32 * 10.0 / 255.0, 1.0]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.ppm");
        f.write_ppm(&p).unwrap();
        let g = Frame::read_ppm(&p).unwrap();
        assert_eq!(f, g);
        assert_eq!(g.flipped().flipped(), g);
        assert_eq!(g.flipped().pixel(0, 1), g.pixel(4, 1));
    }

    #[test]
    fn ppm_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ppm");
        std::fs::write(&p, b"P3\n1 1\n255\n0 0 0\n").unwrap();
        assert!(matches!(Frame::read_ppm(&p), Err(Error::Format { .. })));
        std::fs::write(&p, b"P6\n# comment\n2 2\n255\n\x00\x00").unwrap();
        assert!(matches!(Frame::read_ppm(&p), Err(Error::Format { .. })));
        assert!(matches!(Frame::read_ppm(dir.path().join("none.ppm")), Err(Error::Io { .. })));
    }
}
