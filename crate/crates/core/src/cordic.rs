//! Shift-add CORDIC vectoring and the fixed-point trig tables used downstream.
//!
//! The vectoring kernel only adds, subtracts and shifts. The single multiply
//! is the final gain compensation by a tabulated `1/K(n)`. Inputs are first
//! normalized into a fixed working width (a leading-zero count plus a shift),
//! which makes angle precision independent of the input scale.

use std::io::Write;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::LazyLock;

use crate::error::{Error, Result};

pub const DEFAULT_FRAC_BITS: u32 = 16;
pub const DEFAULT_ITERATIONS: u32 = 16;
pub const MAX_ITERATIONS: u32 = 30;
pub const MAX_FRAC_BITS: u32 = 30;

/// Fractional bits of the internal angle accumulator (degrees).
const ANGLE_BITS: u32 = 32;
/// Inputs are shifted so the larger component occupies this many bits.
const WORK_BITS: u32 = 40;
/// Fractional bits of the reciprocal-gain constants.
const GAIN_BITS: u32 = 30;

/// `atan(2^-i)` in degrees, Q(ANGLE_BITS).
static ATAN_TABLE: LazyLock<[i64; MAX_ITERATIONS as usize]> = LazyLock::new(|| {
    let mut t = [0i64; MAX_ITERATIONS as usize];
    for (i, e) in t.iter_mut().enumerate() {
        let a = (2f64).powi(-(i as i32)).atan().to_degrees();
        *e = (a * (1u64 << ANGLE_BITS) as f64).round() as i64;
    }
    t
});

/// `1/K(n)` for `n = 1..=MAX_ITERATIONS` (index `n - 1`), Q(GAIN_BITS).
static INV_GAIN: LazyLock<[i64; MAX_ITERATIONS as usize]> = LazyLock::new(|| {
    let mut t = [0i64; MAX_ITERATIONS as usize];
    let mut k = 1.0f64;
    for (i, e) in t.iter_mut().enumerate() {
        k *= (1.0 + (2f64).powi(-2 * i as i32)).sqrt();
        *e = ((1u64 << GAIN_BITS) as f64 / k).round() as i64;
    }
    t
});

/// Signed Q-format number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Fixed {
    raw: i64,
    frac_bits: u32,
}

impl Fixed {
    pub const fn from_raw(raw: i64, frac_bits: u32) -> Self {
        Self { raw, frac_bits }
    }

    pub fn from_f64(v: f64, frac_bits: u32) -> Self {
        Self { raw: (v * (1u64 << frac_bits) as f64).round() as i64, frac_bits }
    }

    pub fn from_int(v: i64, frac_bits: u32) -> Self {
        Self { raw: v << frac_bits, frac_bits }
    }

    #[inline]
    pub fn raw(self) -> i64 {
        self.raw
    }

    #[inline]
    pub fn frac_bits(self) -> u32 {
        self.frac_bits
    }

    pub fn to_f64(self) -> f64 {
        self.raw as f64 / (1u64 << self.frac_bits) as f64
    }

    pub fn checked_add(self, rhs: Fixed) -> Option<Fixed> {
        (self.frac_bits == rhs.frac_bits)
            .then(|| self.raw.checked_add(rhs.raw))
            .flatten()
            .map(|raw| Fixed { raw, frac_bits: self.frac_bits })
    }

    pub fn checked_sub(self, rhs: Fixed) -> Option<Fixed> {
        self.checked_add(-rhs)
    }

    /// Product rounded to nearest; `None` on format mismatch or overflow.
    pub fn checked_mul(self, rhs: Fixed) -> Option<Fixed> {
        if self.frac_bits != rhs.frac_bits {
            return None;
        }
        let wide = self.raw as i128 * rhs.raw as i128;
        let half = if self.frac_bits == 0 { 0 } else { 1i128 << (self.frac_bits - 1) };
        i64::try_from((wide + half) >> self.frac_bits).ok().map(|raw| Fixed { raw, frac_bits: self.frac_bits })
    }
}

impl Neg for Fixed {
    type Output = Fixed;
    fn neg(self) -> Fixed {
        Fixed { raw: -self.raw, frac_bits: self.frac_bits }
    }
}

impl Add for Fixed {
    type Output = Fixed;
    fn add(self, rhs: Fixed) -> Fixed {
        self.checked_add(rhs).expect("Fixed add: mismatched frac_bits or overflow")
    }
}

impl Sub for Fixed {
    type Output = Fixed;
    fn sub(self, rhs: Fixed) -> Fixed {
        self.checked_sub(rhs).expect("Fixed sub: mismatched frac_bits or overflow")
    }
}

impl Mul for Fixed {
    type Output = Fixed;
    fn mul(self, rhs: Fixed) -> Fixed {
        self.checked_mul(rhs).expect("Fixed mul: mismatched frac_bits or overflow")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CordicResult {
    pub magnitude: Fixed,
    /// In `[0, 360)`.
    pub angle_deg: Fixed,
}

/// A validated CORDIC configuration (iteration count and output format).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cordic {
    iterations: u32,
    frac_bits: u32,
}

impl Default for Cordic {
    fn default() -> Self {
        Self { iterations: DEFAULT_ITERATIONS, frac_bits: DEFAULT_FRAC_BITS }
    }
}

impl Cordic {
    pub fn new(iterations: u32, frac_bits: u32) -> Result<Self> {
        if !(1..=MAX_ITERATIONS).contains(&iterations) {
            return Err(Error::InvalidParameter(format!(
                "cordic iterations {iterations} outside [1, {MAX_ITERATIONS}]"
            )));
        }
        if !(1..=MAX_FRAC_BITS).contains(&frac_bits) {
            return Err(Error::InvalidParameter(format!("cordic frac_bits {frac_bits} outside [1, {MAX_FRAC_BITS}]")));
        }
        Ok(Self { iterations, frac_bits })
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// Vectoring on integer components of any common scale.
    ///
    /// Returns `(magnitude, angle)` as raw values with `frac_bits` fractional
    /// bits: the magnitude is in the units of the inputs, the angle in degrees
    /// within `[0, 360)`. `(0, 0)` yields `(0, 0)`.
    pub fn vectoring_raw(&self, x: i64, y: i64, input_frac_bits: u32) -> (i64, i64) {
        if x == 0 && y == 0 {
            return (0, 0);
        }
        let fb = self.frac_bits;

        // Fold the left half-plane onto the right: rotate by 180°, then scale
        // to WORK_BITS significant bits.
        let mut z = if x < 0 { 180i64 << ANGLE_BITS } else { 0 };
        let (mut x, mut y, norm_shift) = if x == i64::MIN || y == i64::MIN {
            let (x, y) = if x < 0 { (-(x as i128), -(y as i128)) } else { (x as i128, y as i128) };
            let bits = 128 - x.unsigned_abs().max(y.unsigned_abs()).leading_zeros();
            let shift = WORK_BITS as i32 - bits as i32;
            ((x >> -shift) as i64, (y >> -shift) as i64, shift)
        } else {
            let (x, y) = if x < 0 { (-x, -y) } else { (x, y) };
            let bits = 64 - x.unsigned_abs().max(y.unsigned_abs()).leading_zeros();
            let shift = WORK_BITS as i32 - bits as i32;
            if shift >= 0 {
                (x << shift, y << shift, shift)
            } else {
                (x >> -shift, y >> -shift, shift)
            }
        };

        let atan = &ATAN_TABLE[..self.iterations as usize];
        for (i, &step) in atan.iter().enumerate() {
            // `flip` is 0 when y > 0 and -1 otherwise; `(v ^ flip) - flip` negates v when set.
            let flip = (y - 1) >> 63;
            let (sx, sy) = ((x >> i ^ flip) - flip, (y >> i ^ flip) - flip);
            x += sy;
            y -= sx;
            z += (step ^ flip) - flip;
        }

        // Gain compensation, then undo normalization and convert to the output
        // format in one rounding shift.
        let scaled = x as i128 * INV_GAIN[self.iterations as usize - 1] as i128;
        let shift = GAIN_BITS as i32 + norm_shift + input_frac_bits as i32 - fb as i32;
        let magnitude = round_shift(scaled, shift);

        // z stays within one turn of the folded start, so one correction wraps it.
        let full_turn = 360i64 << fb;
        let mut angle = round_shift(z as i128, (ANGLE_BITS - fb) as i32);
        if angle < 0 {
            angle += full_turn;
        } else if angle >= full_turn {
            angle -= full_turn;
        }
        (magnitude, angle)
    }

    pub fn vectoring(&self, x: Fixed, y: Fixed) -> Result<CordicResult> {
        if x.frac_bits != y.frac_bits {
            return Err(Error::InvalidParameter(format!(
                "mismatched Q formats: {} vs {} fractional bits",
                x.frac_bits, y.frac_bits
            )));
        }
        let (mag, ang) = self.vectoring_raw(x.raw, y.raw, x.frac_bits);
        Ok(CordicResult {
            magnitude: Fixed::from_raw(mag, self.frac_bits),
            angle_deg: Fixed::from_raw(ang, self.frac_bits),
        })
    }
}

/// Arithmetic shift with round-half-up; negative `shift` shifts left.
#[inline]
fn round_shift(v: i128, shift: i32) -> i64 {
    let r = if shift > 0 { (v + (1i128 << (shift - 1))) >> shift } else { v << (-shift) };
    r as i64
}

/// Magnitude and angle (degrees, `[0, 360)`) of `(x, y)`, output in the inputs' Q format.
pub fn cordic_vectoring(x: Fixed, y: Fixed, iterations: u32) -> Result<CordicResult> {
    Cordic::new(iterations, x.frac_bits)?.vectoring(x, y)
}

/// Cosine/sine of each bin-center angle `(i + 0.5) * 360 / bins`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigLut {
    entries: Vec<(Fixed, Fixed)>,
}

impl TrigLut {
    pub fn bins(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn get(&self, i: usize) -> (Fixed, Fixed) {
        self.entries[i]
    }

    pub fn entries(&self) -> &[(Fixed, Fixed)] {
        &self.entries
    }

    /// One `index cos sin` line per entry; cos/sin are raw Q16.16 integers.
    pub fn dump(&self, mut w: impl Write) -> std::io::Result<()> {
        for (i, (c, s)) in self.entries.iter().enumerate() {
            writeln!(w, "{} {} {}", i, c.raw(), s.raw())?;
        }
        Ok(())
    }
}

pub fn build_trig_lut(bins: usize) -> Result<TrigLut> {
    if bins == 0 {
        return Err(Error::InvalidParameter("trig LUT needs at least one bin".into()));
    }
    let step = 360.0 / bins as f64;
    let entries = (0..bins)
        .map(|i| {
            let a = ((i as f64 + 0.5) * step).to_radians();
            (Fixed::from_f64(a.cos(), DEFAULT_FRAC_BITS), Fixed::from_f64(a.sin(), DEFAULT_FRAC_BITS))
        })
        .collect();
    Ok(TrigLut { entries })
}
