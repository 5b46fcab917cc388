//! The single derivative pass shared by corner detection and description.

use crate::cordic::Cordic;
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Number of stored orientation bins (10° each).
pub const DIR_BINS: usize = 36;
pub const DIR_BIN_DEG: u32 = 10;

/// Sobel derivatives plus CORDIC magnitude, angle and quantized direction.
///
/// The 1-pixel border holds zeros in every plane.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GradientField {
    width: usize,
    height: usize,
    frac_bits: u32,
    ix: Vec<i32>,
    iy: Vec<i32>,
    mag: Vec<u32>,
    angle: Vec<u32>,
    dir: Vec<u8>,
}

impl GradientField {
    /// Builds a field from explicit planes; used to construct synthetic
    /// neighborhoods. `mag` is raw fixed-point with `frac_bits` fractional bits;
    /// the angle plane is derived from `ix`, `iy` with a default-length CORDIC.
    pub fn from_planes(
        width: usize,
        height: usize,
        frac_bits: u32,
        ix: Vec<i32>,
        iy: Vec<i32>,
        mag: Vec<u32>,
        dir: Vec<u8>,
    ) -> Result<Self> {
        let n = width * height;
        if ix.len() != n || iy.len() != n || mag.len() != n || dir.len() != n {
            return Err(Error::DimensionMismatch("gradient planes must be width*height".into()));
        }
        if dir.iter().any(|&d| d as usize >= DIR_BINS) {
            return Err(Error::InvalidParameter(format!("dir values must be < {DIR_BINS}")));
        }
        let cordic = Cordic::new(crate::cordic::DEFAULT_ITERATIONS, frac_bits)?;
        let angle = ix.iter().zip(&iy).map(|(&x, &y)| cordic.vectoring_raw(x as i64, y as i64, 0).1 as u32).collect();
        Ok(Self { width, height, frac_bits, ix, iy, mag, angle, dir })
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
    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }
    pub fn ix(&self) -> &[i32] {
        &self.ix
    }
    pub fn iy(&self) -> &[i32] {
        &self.iy
    }
    pub fn mag(&self) -> &[u32] {
        &self.mag
    }
    /// Raw direction in degrees, `[0, 360)` with `frac_bits` fractional bits.
    pub fn angle(&self) -> &[u32] {
        &self.angle
    }
    pub fn dir(&self) -> &[u8] {
        &self.dir
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn mag_f64(&self, i: usize) -> f64 {
        self.mag[i] as f64 / (1u64 << self.frac_bits) as f64
    }
}

/// Quantized orientation of `(ix, iy)`: `floor(angle / 10°)`, in `[0, 36)`.
#[inline]
pub fn orientation_bin(cordic: &Cordic, ix: i32, iy: i32) -> u8 {
    let (_, angle) = cordic.vectoring_raw(ix as i64, iy as i64, 0);
    bin_of_angle(angle, cordic.frac_bits())
}

#[inline]
fn bin_of_angle(angle_raw: i64, frac_bits: u32) -> u8 {
    let bin = (angle_raw >> frac_bits) / DIR_BIN_DEG as i64;
    bin.clamp(0, DIR_BINS as i64 - 1) as u8
}

/// 3×3 Sobel derivatives, then magnitude and direction through CORDIC.
pub fn compute_gradients(img: &GrayImage, cordic: &Cordic) -> Result<GradientField> {
    img.require_min_size(3)?;
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let fb = cordic.frac_bits();
    let mut ix = vec![0i32; n];
    let mut iy = vec![0i32; n];
    let mut mag = vec![0u32; n];
    let mut angle = vec![0u32; n];
    let mut dir = vec![0u8; n];
    let px = img.data();

    for y in 1..h - 1 {
        let (up, mid, down) = ((y - 1) * w, y * w, (y + 1) * w);
        for x in 1..w - 1 {
            let p = |row: usize, dx: usize| px[row + x + dx - 1] as i32;
            let gx = (p(up, 2) + 2 * p(mid, 2) + p(down, 2)) - (p(up, 0) + 2 * p(mid, 0) + p(down, 0));
            let gy = (p(down, 0) + 2 * p(down, 1) + p(down, 2)) - (p(up, 0) + 2 * p(up, 1) + p(up, 2));
            let i = mid + x;
            ix[i] = gx;
            iy[i] = gy;
            if gx != 0 || gy != 0 {
                let (m, a) = cordic.vectoring_raw(gx as i64, gy as i64, 0);
                mag[i] = m as u32;
                angle[i] = a as u32;
                dir[i] = bin_of_angle(a, fb);
            }
        }
    }
    Ok(GradientField { width: w, height: h, frac_bits: fb, ix, iy, mag, angle, dir })
}
