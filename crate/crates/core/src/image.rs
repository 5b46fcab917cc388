//! 8-bit grayscale frames and their file formats.
//!
//! PGM (binary `P5`, maxval ≤ 255) is read and written by hand so that test
//! fixtures round-trip bit-exactly. PNG goes through the `image` crate.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Single-channel 8-bit image, row-major.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} image needs {} bytes, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn require_min_size(&self, min: usize) -> Result<()> {
        if self.width < min || self.height < min {
            return Err(Error::ImageTooSmall { width: self.width, height: self.height, min });
        }
        Ok(())
    }

    /// Copy of the `w`×`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<GrayImage> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::DimensionMismatch(format!(
                "crop {}x{}+{}+{} exceeds {}x{} image",
                w, h, x0, y0, self.width, self.height
            )));
        }
        Ok(GrayImage::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y)))
    }

    pub fn transpose(&self) -> GrayImage {
        GrayImage::from_fn(self.height, self.width, |x, y| self.get(y, x))
    }

    /// Counter-clockwise quarter turn; input pixel `(x, y)` lands at `(y, width - 1 - x)`.
    pub fn rot90(&self) -> GrayImage {
        let w = self.width;
        GrayImage::from_fn(self.height, self.width, |x, y| self.get(w - 1 - y, x))
    }

    pub fn invert(&self) -> GrayImage {
        GrayImage { width: self.width, height: self.height, data: self.data.iter().map(|v| 255 - v).collect() }
    }
}

/// Luma conversion: `round(0.299 r + 0.587 g + 0.114 b)`.
pub fn to_grayscale(width: usize, height: usize, r: &[u8], g: &[u8], b: &[u8]) -> Result<GrayImage> {
    let n = width * height;
    if r.len() != n || g.len() != n || b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "channel planes have lengths {}, {}, {} for a {}x{} image",
            r.len(),
            g.len(),
            b.len(),
            width,
            height
        )));
    }
    let data = r.iter().zip(g).zip(b).map(|((&r, &g), &b)| luma(r, g, b)).collect();
    GrayImage::new(width, height, data)
}

#[inline]
fn luma(r: u8, g: u8, b: u8) -> u8 {
    // Weights in thousandths sum to exactly 1000, so this is round-half-up of the real value.
    let acc = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((acc + 500) / 1000).min(255) as u8
}

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Decode a PGM (P5) or PNG file into a grayscale image.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::FileNotFound(path.to_path_buf())),
        Err(e) => return Err(e.into()),
    };
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(PNG_MAGIC) {
        decode_png(bytes)
    } else if bytes.len() >= 2 && bytes[0] == b'P' && bytes[1].is_ascii_digit() {
        Err(Error::UnsupportedFormat(format!("netpbm variant P{}", bytes[1] as char)))
    } else {
        Err(Error::UnsupportedFormat("expected binary PGM (P5) or PNG".into()))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        *field = pgm_header_number(bytes, &mut pos)?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat(format!("PGM maxval {maxval} (only 1..=255 supported)")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::CorruptImage("PGM header not terminated".into())),
    }
    let n = width * height;
    let raster =
        bytes.get(pos..pos + n).ok_or_else(|| Error::CorruptImage(format!("PGM raster truncated: need {n} bytes")))?;
    GrayImage::new(width, height, raster.to_vec())
}

fn pgm_header_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(c) if c.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&c) = bytes.get(*pos) {
                    *pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => return Err(Error::CorruptImage("PGM header truncated".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::CorruptImage("malformed PGM header".into()))
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::CorruptImage(e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if decoded.color().has_color() {
        let rgb = decoded.to_rgb8().into_raw();
        let plane = |c: usize| rgb.iter().skip(c).step_by(3).copied().collect::<Vec<u8>>();
        to_grayscale(w, h, &plane(0), &plane(1), &plane(2))
    } else {
        GrayImage::new(w, h, decoded.to_luma8().into_raw())
    }
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

/// Write `img` as PGM or PNG, chosen by the file extension.
pub fn save_image(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).unwrap_or_default();
    match ext.as_str() {
        "pgm" => {
            let mut f = fs::File::create(path)?;
            f.write_all(&encode_pgm(img))?;
            Ok(())
        }
        "png" => {
            let buf = image::GrayImage::from_raw(img.width as u32, img.height as u32, img.data.clone())
                .expect("buffer length checked at construction");
            buf.save_with_format(path, image::ImageFormat::Png).map_err(|e| Error::Io(std::io::Error::other(e)))
        }
        other => Err(Error::UnsupportedFormat(format!("output extension '{other}'"))),
    }
}
