//! Pyramid-free SIFT-style description of Harris corners.
//!
//! Main orientation comes from an unweighted 3×3 magnitude histogram over the
//! 36 stored direction bins, folded pairwise to 18 bins (20° each). The
//! descriptor covers a 12×12 window (4×4 sub-regions of 3×3 pixels) in a
//! frame rotated to the main orientation. Each pixel's rotated offset and
//! relative direction are spread bilinearly over sub-region rows, columns and
//! 8 orientation bins.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cordic::{build_trig_lut, TrigLut};
use crate::error::{Error, Result};
use crate::gradient::{GradientField, DIR_BINS, DIR_BIN_DEG};
use crate::harris::Corner;

pub const SUBREGIONS: usize = 4;
pub const SUBREGION_SIZE: usize = 3;
pub const ORIENTATION_BINS: usize = 8;
pub const DESCRIPTOR_LEN: usize = SUBREGIONS * SUBREGIONS * ORIENTATION_BINS;
/// Folded main-orientation histogram size.
pub const FOLDED_BINS: usize = 18;
/// Minimum distance from a corner to the image edge for description.
pub const BORDER_MARGIN: u32 = 10;
pub const CLAMP: f64 = 0.2;

/// Window radius and Gaussian sigma of the classic orientation histogram.
const CLASSIC_RADIUS: f64 = 4.5;
const CLASSIC_SIGMA: f64 = 1.5;

/// How the main orientation is assigned.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrientationMethod {
    /// Unweighted 3×3 neighborhood, 36 bins folded to 18.
    #[default]
    Folded,
    /// Gaussian-weighted (sigma 1.5) disc of radius 4.5, 36 bins, no fold.
    Classic,
}

/// Winning histogram bin out of `bins` equal sectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MainOrientation {
    pub bin: usize,
    pub bins: usize,
}

impl MainOrientation {
    pub fn angle_deg(&self) -> f64 {
        (self.bin as f64 + 0.5) * 360.0 / self.bins as f64
    }

    /// Lower edge of the winning bin, in units of the 10° direction bins.
    fn lower_edge_dir_bins(&self) -> usize {
        self.bin * DIR_BINS / self.bins
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    pub corner: Corner,
    pub main_angle_deg: f64,
    pub vec: Vec<f32>,
}

fn check_margin(grads: &GradientField, c: &Corner, margin: u32) -> Result<()> {
    let (w, h) = (grads.width() as u32, grads.height() as u32);
    if c.x < margin || c.y < margin || c.x + margin >= w || c.y + margin >= h {
        return Err(Error::TooCloseToBorder { x: c.x, y: c.y });
    }
    Ok(())
}

fn argmax_first(hist: &[u64]) -> usize {
    // First maximum, i.e. ties go to the smaller angle.
    let mut best = 0;
    for (i, &v) in hist.iter().enumerate() {
        if v > hist[best] {
            best = i;
        }
    }
    best
}

/// Main orientation over the 3×3 neighborhood, folded 36 → 18 bins.
pub fn main_orientation(grads: &GradientField, c: &Corner) -> Result<MainOrientation> {
    check_margin(grads, c, 1)?;
    let mut hist36 = [0u64; DIR_BINS];
    for y in c.y - 1..=c.y + 1 {
        for x in c.x - 1..=c.x + 1 {
            let i = grads.index(x as usize, y as usize);
            hist36[grads.dir()[i] as usize] += grads.mag()[i] as u64;
        }
    }
    if hist36.iter().all(|&v| v == 0) {
        return Err(Error::ZeroGradientNeighborhood { x: c.x, y: c.y });
    }
    let folded: Vec<u64> = hist36.chunks(2).map(|p| p[0] + p[1]).collect();
    Ok(MainOrientation { bin: argmax_first(&folded), bins: FOLDED_BINS })
}

/// Classic orientation: Gaussian-weighted disc, 36 bins at 10° resolution.
pub fn main_orientation_classic(grads: &GradientField, c: &Corner) -> Result<MainOrientation> {
    let r = CLASSIC_RADIUS.floor() as i64;
    check_margin(grads, c, r as u32)?;
    let mut hist = [0f64; DIR_BINS];
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = (dx * dx + dy * dy) as f64;
            if d2 > CLASSIC_RADIUS * CLASSIC_RADIUS {
                continue;
            }
            let i = grads.index((c.x as i64 + dx) as usize, (c.y as i64 + dy) as usize);
            let weight = (-d2 / (2.0 * CLASSIC_SIGMA * CLASSIC_SIGMA)).exp();
            hist[grads.dir()[i] as usize] += weight * grads.mag()[i] as f64;
        }
    }
    let mut best = 0;
    for i in 1..DIR_BINS {
        if hist[i] > hist[best] {
            best = i;
        }
    }
    if hist[best] <= 0.0 {
        return Err(Error::ZeroGradientNeighborhood { x: c.x, y: c.y });
    }
    Ok(MainOrientation { bin: best, bins: DIR_BINS })
}

/// Weight of the neighbor selected by `e ∈ {0, 1}` at fractional offset `d`:
/// `d^e (1-d)^(1-e)`.
#[inline]
fn bilinear(d: f64, e: usize) -> f64 {
    if e == 0 {
        1.0 - d
    } else {
        d
    }
}

/// Unit-L2 normalization followed by the 0.2 clamp; `None` for a zero vector.
pub fn normalize_and_clamp(raw: &[f64]) -> Option<Vec<f64>> {
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 0.0 || !norm.is_finite() {
        return None;
    }
    Some(raw.iter().map(|v| (v / norm).min(CLAMP)).collect())
}

/// Second stage: renormalize the clamped vector to unit length.
pub fn renormalize(clamped: &[f64]) -> Vec<f32> {
    let norm = clamped.iter().map(|v| v * v).sum::<f64>().sqrt();
    clamped.iter().map(|v| (v / norm) as f32).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescribeStats {
    pub described: usize,
    pub too_close_to_border: usize,
    pub zero_gradient: usize,
    pub zero_descriptor: usize,
}

impl DescribeStats {
    pub fn rejected(&self) -> usize {
        self.too_close_to_border + self.zero_gradient + self.zero_descriptor
    }
}

/// Holds the rotation tables for both orientation resolutions.
#[derive(Clone, Debug)]
pub struct DescriptorExtractor {
    method: OrientationMethod,
    lut_folded: TrigLut,
    lut_fine: TrigLut,
}

impl Default for DescriptorExtractor {
    fn default() -> Self {
        Self::new(OrientationMethod::Folded)
    }
}

impl DescriptorExtractor {
    pub fn new(method: OrientationMethod) -> Self {
        Self {
            method,
            lut_folded: build_trig_lut(FOLDED_BINS).expect("nonzero bins"),
            lut_fine: build_trig_lut(DIR_BINS).expect("nonzero bins"),
        }
    }

    pub fn method(&self) -> OrientationMethod {
        self.method
    }

    pub fn orientation(&self, grads: &GradientField, c: &Corner) -> Result<MainOrientation> {
        match self.method {
            OrientationMethod::Folded => main_orientation(grads, c),
            OrientationMethod::Classic => main_orientation_classic(grads, c),
        }
    }

    fn lut_for(&self, main: MainOrientation) -> Result<&TrigLut> {
        match main.bins {
            FOLDED_BINS => Ok(&self.lut_folded),
            DIR_BINS => Ok(&self.lut_fine),
            n => Err(Error::InvalidParameter(format!("no rotation table for {n} orientation bins"))),
        }
    }

    /// The un-normalized 128-bin histogram.
    pub fn raw_vector(&self, grads: &GradientField, c: &Corner, main: MainOrientation) -> Result<Vec<f64>> {
        check_margin(grads, c, BORDER_MARGIN)?;
        if main.bin >= main.bins {
            return Err(Error::InvalidParameter(format!("orientation bin {} of {}", main.bin, main.bins)));
        }
        let (cos, sin) = self.lut_for(main)?.get(main.bin);
        let (cos, sin) = (cos.raw(), sin.raw());
        let frac = crate::cordic::DEFAULT_FRAC_BITS;
        let edge_deg = (main.lower_edge_dir_bins() as u32 * DIR_BIN_DEG) as f64;
        let angle_scale = (1u64 << grads.frac_bits()) as f64;

        let side = (SUBREGIONS * SUBREGION_SIZE) as i64;
        let half_side = (side << frac) / 2;
        // Contributions fade linearly to zero half a sub-region beyond the
        // 12×12 square, so pixels never enter or leave the support at full weight.
        let limit = half_side + ((SUBREGION_SIZE as i64) << frac) / 2;
        let reach = (limit as f64 / (1u64 << frac) as f64 * std::f64::consts::SQRT_2).ceil() as i64;
        let cell = (SUBREGION_SIZE as f64) * (1u64 << frac) as f64;
        let (w, h) = (grads.width() as i64, grads.height() as i64);
        let mut hist = vec![0f64; DESCRIPTOR_LEN];
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                // Offset expressed in the frame rotated by -main_angle, Q16.16.
                let u = dx * cos + dy * sin;
                let v = dy * cos - dx * sin;
                if u.abs() >= limit || v.abs() >= limit {
                    continue;
                }
                let (px, py) = (c.x as i64 + dx, c.y as i64 + dy);
                if px < 0 || py < 0 || px >= w || py >= h {
                    continue;
                }
                let gi = grads.index(px as usize, py as usize);
                let m = grads.mag_f64(gi);
                if m == 0.0 {
                    continue;
                }

                // Sub-region coordinates with centers on integers.
                let rpos = (v + half_side) as f64 / cell - 0.5;
                let cpos = (u + half_side) as f64 / cell - 0.5;
                let (r0, c0) = (rpos.floor(), cpos.floor());
                let (dr, dc) = (rpos - r0, cpos - c0);

                // Full-precision direction rather than the 10° bin.
                let rel = (grads.angle()[gi] as f64 / angle_scale - edge_deg).rem_euclid(360.0);
                let opos = rel / (360.0 / ORIENTATION_BINS as f64);
                let o0 = opos.floor();
                let dn = opos - o0;

                for k in 0..2 {
                    let rr = r0 as i64 + k as i64;
                    if !(0..SUBREGIONS as i64).contains(&rr) {
                        continue;
                    }
                    let wr = bilinear(dr, k);
                    for mm in 0..2 {
                        let cc = c0 as i64 + mm as i64;
                        if !(0..SUBREGIONS as i64).contains(&cc) {
                            continue;
                        }
                        let wc = bilinear(dc, mm);
                        for n in 0..2 {
                            let ob = (o0 as usize + n) % ORIENTATION_BINS;
                            let wo = bilinear(dn, n);
                            let idx = (rr as usize * SUBREGIONS + cc as usize) * ORIENTATION_BINS + ob;
                            hist[idx] += m * wr * wc * wo;
                        }
                    }
                }
            }
        }
        Ok(hist)
    }

    pub fn build(&self, grads: &GradientField, c: &Corner, main: MainOrientation) -> Result<Descriptor> {
        let raw = self.raw_vector(grads, c, main)?;
        let clamped = normalize_and_clamp(&raw).ok_or(Error::ZeroDescriptor { x: c.x, y: c.y })?;
        Ok(Descriptor { corner: *c, main_angle_deg: main.angle_deg(), vec: renormalize(&clamped) })
    }

    pub fn describe(&self, grads: &GradientField, c: &Corner) -> Result<Descriptor> {
        check_margin(grads, c, BORDER_MARGIN)?;
        let main = self.orientation(grads, c)?;
        self.build(grads, c, main)
    }

    /// Describes every corner that survives the border and gradient checks,
    /// keeping input order.
    pub fn describe_all(&self, grads: &GradientField, corners: &[Corner]) -> (Vec<Descriptor>, DescribeStats) {
        let results: Vec<Result<Descriptor>> = corners.par_iter().map(|c| self.describe(grads, c)).collect();
        let mut stats = DescribeStats::default();
        let mut out = Vec::with_capacity(results.len());
        for r in results {
            match r {
                Ok(d) => out.push(d),
                Err(Error::TooCloseToBorder { .. }) => stats.too_close_to_border += 1,
                Err(Error::ZeroGradientNeighborhood { .. }) => stats.zero_gradient += 1,
                Err(_) => stats.zero_descriptor += 1,
            }
        }
        stats.described = out.len();
        (out, stats)
    }
}

/// Builds a descriptor for `c` at a given main orientation.
pub fn build_descriptor(grads: &GradientField, c: &Corner, main: MainOrientation) -> Result<Descriptor> {
    DescriptorExtractor::default().build(grads, c, main)
}

pub fn describe_all(grads: &GradientField, corners: &[Corner]) -> (Vec<Descriptor>, DescribeStats) {
    DescriptorExtractor::default().describe_all(grads, corners)
}

/// JSON shape of a descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptorRecord {
    pub x: u32,
    pub y: u32,
    pub angle: f64,
    pub vec: Vec<f32>,
}

impl From<&Descriptor> for DescriptorRecord {
    fn from(d: &Descriptor) -> Self {
        Self { x: d.corner.x, y: d.corner.y, angle: d.main_angle_deg, vec: d.vec.clone() }
    }
}

/// Bytes per binary record: u16 x, u16 y, f32 angle, 128 × f32, little-endian.
pub const BINARY_RECORD_LEN: usize = 2 + 2 + 4 + 4 * DESCRIPTOR_LEN;

pub fn write_binary(descs: &[Descriptor], mut w: impl Write) -> Result<()> {
    for d in descs {
        let (x, y) = (u16::try_from(d.corner.x), u16::try_from(d.corner.y));
        let (Ok(x), Ok(y)) = (x, y) else {
            return Err(Error::InvalidParameter("corner coordinate exceeds u16".into()));
        };
        w.write_all(&x.to_le_bytes())?;
        w.write_all(&y.to_le_bytes())?;
        w.write_all(&(d.main_angle_deg as f32).to_le_bytes())?;
        for v in &d.vec {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads binary records; corner responses are not stored and come back as 0.
pub fn read_binary(mut r: impl Read) -> Result<Vec<Descriptor>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % BINARY_RECORD_LEN != 0 {
        return Err(Error::CorruptImage(format!(
            "descriptor stream length {} is not a multiple of {BINARY_RECORD_LEN}",
            bytes.len()
        )));
    }
    let f32_at = |b: &[u8], o: usize| f32::from_le_bytes(b[o..o + 4].try_into().unwrap());
    Ok(bytes
        .chunks_exact(BINARY_RECORD_LEN)
        .map(|rec| Descriptor {
            corner: Corner {
                x: u16::from_le_bytes([rec[0], rec[1]]) as u32,
                y: u16::from_le_bytes([rec[2], rec[3]]) as u32,
                response: 0.0,
            },
            main_angle_deg: f32_at(rec, 4) as f64,
            vec: (0..DESCRIPTOR_LEN).map(|i| f32_at(rec, 8 + 4 * i)).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cordic::Cordic;
    use crate::gradient::compute_gradients;
    use crate::image::GrayImage;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field_with(w: usize, h: usize, f: impl Fn(usize, usize) -> (u8, u32)) -> GradientField {
        let n = w * h;
        let (mut dir, mut mag) = (vec![0u8; n], vec![0u32; n]);
        for y in 0..h {
            for x in 0..w {
                let (d, m) = f(x, y);
                dir[y * w + x] = d;
                mag[y * w + x] = m;
            }
        }
        GradientField::from_planes(w, h, 16, vec![0; n], vec![0; n], mag, dir).unwrap()
    }

    fn corner(x: u32, y: u32) -> Corner {
        Corner { x, y, response: 1.0 }
    }

    #[test]
    fn orientation_single_bin() {
        let g = field_with(32, 32, |_, _| (0, 1 << 16));
        let m = main_orientation(&g, &corner(16, 16)).unwrap();
        assert_eq!(m, MainOrientation { bin: 0, bins: 18 });
        assert_eq!(m.angle_deg(), 10.0);
    }

    #[test]
    fn orientation_majority() {
        // 5 pixels in bin 9 (90°), 4 pixels in bin 0.
        let g = field_with(32, 32, |x, y| if (x + y) % 2 == 0 { (9, 1 << 16) } else { (0, 1 << 16) });
        let m = main_orientation(&g, &corner(16, 16)).unwrap();
        assert_eq!(m.bin, 4);
        assert_eq!(m.angle_deg(), 90.0);
    }

    #[test]
    fn orientation_tie_goes_to_smaller_angle() {
        let g = field_with(32, 32, |x, _| {
            if x == 15 {
                (20, 3 << 16)
            } else if x == 16 {
                (2, 3 << 16)
            } else {
                (30, 0)
            }
        });
        assert_eq!(main_orientation(&g, &corner(16, 16)).unwrap().bin, 1);
    }

    #[test]
    fn orientation_zero_neighborhood() {
        let g = field_with(32, 32, |_, _| (0, 0));
        assert!(matches!(main_orientation(&g, &corner(16, 16)), Err(Error::ZeroGradientNeighborhood { .. })));
    }

    /// Float reference: 36-bin histogram in f64, folded, first max.
    fn orientation_oracle(g: &GradientField, c: &Corner) -> usize {
        let mut h = [0f64; 36];
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let i = g.index((c.x as i64 + dx) as usize, (c.y as i64 + dy) as usize);
                h[g.dir()[i] as usize] += g.mag()[i] as f64 / 65536.0;
            }
        }
        let folded: Vec<f64> = (0..18).map(|j| h[2 * j] + h[2 * j + 1]).collect();
        let mut best = 0;
        for j in 0..18 {
            if folded[j] > folded[best] {
                best = j;
            }
        }
        best
    }

    #[test]
    fn orientation_matches_float_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let vals: Vec<(u8, u32)> = (0..9).map(|_| (rng.gen_range(0..36), rng.gen_range(0..5u32) << 14)).collect();
            if vals.iter().all(|v| v.1 == 0) {
                continue;
            }
            let g = field_with(8, 8, |x, y| {
                if (3..6).contains(&x) && (3..6).contains(&y) {
                    vals[(y - 3) * 3 + x - 3]
                } else {
                    (0, 0)
                }
            });
            let c = corner(4, 4);
            assert_eq!(main_orientation(&g, &c).unwrap().bin, orientation_oracle(&g, &c));
        }
    }

    #[test]
    fn energy_concentrates_in_relative_bin_zero() {
        let g = field_with(40, 40, |_, _| (0, 5 << 16));
        let ex = DescriptorExtractor::default();
        let c = corner(20, 20);
        let d = ex.describe(&g, &c).unwrap();
        assert_eq!(d.main_angle_deg, 10.0);
        let bin0: f64 = d.vec.iter().step_by(ORIENTATION_BINS).map(|&v| (v as f64).powi(2)).sum();
        assert!((bin0 - 1.0).abs() < 1e-6);
        for (i, v) in d.vec.iter().enumerate() {
            if i % ORIENTATION_BINS != 0 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn descriptor_invariants_on_texture() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = GrayImage::from_fn(64, 64, |_, _| rng.gen());
        let g = compute_gradients(&img, &Cordic::default()).unwrap();
        let ex = DescriptorExtractor::default();
        for y in 10..54 {
            for x in (10..54).step_by(7) {
                let c = corner(x, y);
                let raw = ex.raw_vector(&g, &c, ex.orientation(&g, &c).unwrap()).unwrap();
                let clamped = normalize_and_clamp(&raw).unwrap();
                assert!(clamped.iter().all(|&v| (0.0..=CLAMP + 1e-6).contains(&v)));
                let d = ex.describe(&g, &c).unwrap();
                assert_eq!(d.vec.len(), DESCRIPTOR_LEN);
                let norm: f64 = d.vec.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-6);
                assert!(d.vec.iter().all(|&v| v >= 0.0));
                assert_eq!((d.main_angle_deg - 10.0) % 20.0, 0.0);
            }
        }
    }

    #[test]
    fn describe_all_border_and_empty() {
        let g = field_with(40, 40, |_, _| (0, 1 << 16));
        let (d, s) = describe_all(&g, &[]);
        assert!(d.is_empty());
        assert_eq!(s.rejected(), 0);

        let (d, s) = describe_all(&g, &[corner(2, 20)]);
        assert!(d.is_empty());
        assert_eq!(s.too_close_to_border, 1);
        assert_eq!(s.rejected(), 1);
    }

    #[test]
    fn classic_orientation_bins() {
        let g = field_with(40, 40, |_, _| (13, 1 << 16));
        let m = main_orientation_classic(&g, &corner(20, 20)).unwrap();
        assert_eq!(m, MainOrientation { bin: 13, bins: 36 });
        assert_eq!(m.angle_deg(), 135.0);
        let d = DescriptorExtractor::new(OrientationMethod::Classic).describe(&g, &corner(20, 20)).unwrap();
        assert_eq!(d.main_angle_deg, 135.0);
    }

    #[test]
    fn binary_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = GrayImage::from_fn(48, 48, |_, _| rng.gen());
        let g = compute_gradients(&img, &Cordic::default()).unwrap();
        let (descs, _) = describe_all(&g, &[corner(20, 21), corner(30, 25)]);
        let mut buf = Vec::new();
        write_binary(&descs, &mut buf).unwrap();
        assert_eq!(buf.len(), 2 * BINARY_RECORD_LEN);
        let back = read_binary(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].corner.x, 30);
        assert_eq!(back[1].vec, descs[1].vec);
        assert!(read_binary(&buf[..10]).is_err());
    }
}
