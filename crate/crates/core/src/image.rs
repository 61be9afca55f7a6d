//! Square single-channel intensity images and their on-disk formats.
//!
//! Two formats are supported:
//!
//! * binary PGM (`P5`, maxval 255). Intensities are quantized as
//!   `round(v * 255)` clamped to `[0, 255]` and read back as `byte / 255`.
//! * `.f32`: an 8-byte header of two little-endian `u32` (rows, cols)
//!   followed by row-major little-endian `f32` samples.
//!
//! [`Image::load`] and [`Image::save`] pick the format from the file
//! extension (`.f32` or anything else for PGM).

use std::fs;
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// Square raster of finite intensities, stored row-major.
///
/// Pixel coordinates are `(x, y)` with `x` the column (increasing to the
/// right) and `y` the row (increasing downwards).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    size: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(size: usize, pixels: Vec<f64>) -> Result<Self> {
        if size == 0 {
            return Err(invalid("image size must be positive"));
        }
        if pixels.len() != size * size {
            return Err(invalid(format!(
                "expected {} pixels for a {size}x{size} image, got {}",
                size * size,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "pixel ({}, {}) is not finite",
                i % size,
                i / size
            )));
        }
        Ok(Image { size, pixels })
    }

    pub fn zeros(size: usize) -> Self {
        assert!(size > 0, "image size must be positive");
        Image {
            size,
            pixels: vec![0.0; size * size],
        }
    }

    /// Builds an image from `f(x, y)`. Non-finite values are rejected.
    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                pixels.push(f(x, y));
            }
        }
        Image::new(size, pixels)
    }

    /// Internal constructor for callers that already guarantee finiteness.
    pub(crate) fn from_vec_unchecked(size: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), size * size);
        debug_assert!(pixels.iter().all(|v| v.is_finite()));
        Image { size, pixels }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.size + x]
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Root-mean-square pixel difference between two same-sized images.
    pub fn rms_diff(&self, other: &Image) -> Result<f64> {
        if self.size != other.size {
            return Err(invalid(format!(
                "size mismatch: {} vs {}",
                self.size, other.size
            )));
        }
        let ss: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((ss / self.pixels.len() as f64).sqrt())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let location = path.display().to_string();
        if is_f32_path(path) {
            decode_f32(&bytes, &location)
        } else {
            decode_pgm(&bytes, &location)
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = if is_f32_path(path) {
            self.encode_f32()
        } else {
            self.encode_pgm()
        };
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.size, self.size).into_bytes();
        out.extend(self.pixels.iter().map(|&v| quantize(v)));
        out
    }

    pub fn encode_f32(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.pixels.len());
        out.extend_from_slice(&(self.size as u32).to_le_bytes());
        out.extend_from_slice(&(self.size as u32).to_le_bytes());
        for &v in &self.pixels {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn decode_pgm(bytes: &[u8]) -> Result<Self> {
        decode_pgm(bytes, "<pgm>")
    }

    pub fn decode_f32(bytes: &[u8]) -> Result<Self> {
        decode_f32(bytes, "<f32>")
    }
}

fn is_f32_path(path: &Path) -> bool {
    path.extension()
        .map(|e| e.eq_ignore_ascii_case("f32"))
        .unwrap_or(false)
}

/// 8-bit quantization used by the PGM writer.
pub fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn decode_f32(bytes: &[u8], location: &str) -> Result<Image> {
    if bytes.len() < 8 {
        return Err(Error::parse(location, "truncated .f32 header"));
    }
    let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if rows != cols {
        return Err(Error::parse(
            location,
            format!("non-square image {rows}x{cols}"),
        ));
    }
    let body = &bytes[8..];
    if body.len() != rows * cols * 4 {
        return Err(Error::parse(
            location,
            format!(
                "expected {} bytes of samples, found {}",
                rows * cols * 4,
                body.len()
            ),
        ));
    }
    let pixels = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Image::new(rows, pixels).map_err(|e| Error::parse(location, e.to_string()))
}

fn decode_pgm(bytes: &[u8], location: &str) -> Result<Image> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // whitespace and comments
        while pos < bytes.len() {
            if bytes[pos].is_ascii_whitespace() {
                pos += 1;
            } else if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(location, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::parse(
            location,
            format!("unsupported magic {:?}, expected P5", fields[0]),
        ));
    }
    let parse_num = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::parse(location, format!("bad {what} {s:?}")))
    };
    let width = parse_num(&fields[1], "width")?;
    let height = parse_num(&fields[2], "height")?;
    let maxval = parse_num(&fields[3], "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(
            location,
            format!("unsupported maxval {maxval}, expected 1..=255"),
        ));
    }
    if width != height {
        return Err(Error::parse(
            location,
            format!("non-square image {width}x{height}"),
        ));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height;
    if bytes.len() < pos + n {
        return Err(Error::parse(
            location,
            format!("expected {n} raster bytes, found {}", bytes.len().saturating_sub(pos)),
        ));
    }
    let scale = maxval as f64;
    let pixels = bytes[pos..pos + n].iter().map(|&b| b as f64 / scale).collect();
    Image::new(width, pixels).map_err(|e| Error::parse(location, e.to_string()))
}
