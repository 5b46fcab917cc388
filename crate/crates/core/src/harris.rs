//! Harris response, adaptive thresholding and non-maximum suppression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::GradientField;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarrisParams {
    pub k: f64,
    /// Structure-tensor box window, one of 3, 5, 7.
    pub window: usize,
    pub nms_radius: usize,
    pub alpha: f64,
    pub target_count: usize,
}

impl Default for HarrisParams {
    fn default() -> Self {
        Self { k: 0.04, window: 5, nms_radius: 3, alpha: 0.01, target_count: 512 }
    }
}

impl HarrisParams {
    pub fn validate(&self) -> Result<()> {
        check_window_k(self.window, self.k)?;
        if self.nms_radius == 0 {
            return Err(Error::InvalidParameter("nms_radius must be >= 1".into()));
        }
        check_alpha_target(self.alpha, self.target_count)
    }
}

fn check_window_k(window: usize, k: f64) -> Result<()> {
    if ![3, 5, 7].contains(&window) {
        return Err(Error::InvalidParameter(format!("harris window {window} not in {{3, 5, 7}}")));
    }
    if !(0.04..=0.06).contains(&k) {
        return Err(Error::InvalidParameter(format!("harris k {k} outside [0.04, 0.06]")));
    }
    Ok(())
}

fn check_alpha_target(alpha: f64, target_count: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
    }
    if target_count == 0 {
        return Err(Error::InvalidParameter("target_count must be >= 1".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResponseMap {
    width: usize,
    height: usize,
    border: usize,
    r: Vec<f64>,
}

impl ResponseMap {
    /// Wraps an arbitrary response plane; pixels within `border` of an edge are forced to zero.
    pub fn from_values(width: usize, height: usize, border: usize, mut r: Vec<f64>) -> Result<Self> {
        if r.len() != width * height {
            return Err(Error::DimensionMismatch("response plane must be width*height".into()));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("response values must be finite".into()));
        }
        for y in 0..height {
            for x in 0..width {
                if !in_valid(x, y, width, height, border) {
                    r[y * width + x] = 0.0;
                }
            }
        }
        Ok(Self { width, height, border, r })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn border(&self) -> usize {
        self.border
    }
    pub fn values(&self) -> &[f64] {
        &self.r
    }
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.r[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.r.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        in_valid(x, y, self.width, self.height, self.border)
    }
}

#[inline]
fn in_valid(x: usize, y: usize, w: usize, h: usize, border: usize) -> bool {
    x >= border && y >= border && x + border < w && y + border < h
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corner {
    pub x: u32,
    pub y: u32,
    pub response: f64,
}

/// `k` as an exact rational over 10⁴ (0.04 reduces to 1/25).
fn k_rational(k: f64) -> (i128, i128) {
    let mut num = (k * 10_000.0).round() as i128;
    let mut den = 10_000i128;
    let g = gcd(num, den);
    num /= g;
    den /= g;
    (num, den)
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs().max(1)
}

/// `R = det(M) - k trace(M)^2` over a box-filtered structure tensor.
///
/// Tensor sums are exact 64-bit integers; `R` is formed exactly in 128 bits
/// as `(den (AB - C²) - num (A+B)²) / den` and only the final division is
/// floating point.
pub fn corner_response(grads: &GradientField, window: usize, k: f64) -> Result<ResponseMap> {
    check_window_k(window, k)?;
    let (w, h) = (grads.width(), grads.height());
    let radius = window / 2;
    let border = radius + 1;
    let min = 2 * border + 1;
    if w < min || h < min {
        return Err(Error::ImageTooSmall { width: w, height: h, min });
    }
    let (num, den) = k_rational(k);

    // Integral images (one extra row/column of zeros) of the tensor products.
    let stride = w + 1;
    let mut sxx = vec![0i64; stride * (h + 1)];
    let mut syy = vec![0i64; stride * (h + 1)];
    let mut sxy = vec![0i64; stride * (h + 1)];
    let (ix, iy) = (grads.ix(), grads.iy());
    for y in 0..h {
        let (mut rxx, mut ryy, mut rxy) = (0i64, 0i64, 0i64);
        for x in 0..w {
            let gx = ix[y * w + x] as i64;
            let gy = iy[y * w + x] as i64;
            rxx += gx * gx;
            ryy += gy * gy;
            rxy += gx * gy;
            let o = (y + 1) * stride + x + 1;
            sxx[o] = sxx[o - stride] + rxx;
            syy[o] = syy[o - stride] + ryy;
            sxy[o] = sxy[o - stride] + rxy;
        }
    }
    let boxsum = |s: &[i64], x0: usize, y0: usize, x1: usize, y1: usize| {
        s[y1 * stride + x1] - s[y0 * stride + x1] - s[y1 * stride + x0] + s[y0 * stride + x0]
    };

    let mut r = vec![0.0f64; w * h];
    for y in border..h - border {
        for x in border..w - border {
            let (x0, y0, x1, y1) = (x - radius, y - radius, x + radius + 1, y + radius + 1);
            let a = boxsum(&sxx, x0, y0, x1, y1) as i128;
            let b = boxsum(&syy, x0, y0, x1, y1) as i128;
            let c = boxsum(&sxy, x0, y0, x1, y1) as i128;
            let tr = a + b;
            let scaled = den * (a * b - c * c) - num * tr * tr;
            r[y * w + x] = scaled as f64 / den as f64;
        }
    }
    Ok(ResponseMap { width: w, height: h, border, r })
}

/// `alpha * max(R)`, raised to the `target_count`-th strongest local maximum
/// when more than `target_count` local maxima clear it.
///
/// Local maxima are defined exactly as in [`non_max_suppress`] with `radius`.
pub fn adaptive_threshold(resp: &ResponseMap, target_count: usize, alpha: f64, radius: usize) -> Result<f64> {
    check_alpha_target(alpha, target_count)?;
    let max = resp.max();
    if max <= 0.0 {
        return Err(Error::EmptyResponse);
    }
    let t = alpha * max;
    let maxima = non_max_suppress(resp, t, radius)?;
    if maxima.len() > target_count {
        Ok(maxima[target_count - 1].response)
    } else {
        Ok(t)
    }
}

/// Strict local maxima at or above `threshold`, sorted by descending response
/// (scan order among equals). Equal neighbors are resolved in favor of the
/// lexicographically smallest `(y, x)`.
pub fn non_max_suppress(resp: &ResponseMap, threshold: f64, radius: usize) -> Result<Vec<Corner>> {
    if radius == 0 {
        return Err(Error::InvalidParameter("nms radius must be >= 1".into()));
    }
    let (w, h) = (resp.width, resp.height);
    let mut out = Vec::new();
    for y in resp.border..h.saturating_sub(resp.border) {
        'pixel: for x in resp.border..w.saturating_sub(resp.border) {
            let v = resp.get(x, y);
            if v < threshold {
                continue;
            }
            for ny in y.saturating_sub(radius)..(y + radius + 1).min(h) {
                for nx in x.saturating_sub(radius)..(x + radius + 1).min(w) {
                    if (nx, ny) == (x, y) {
                        continue;
                    }
                    let q = resp.get(nx, ny);
                    // Neighbors earlier in scan order win ties.
                    if q > v || (q == v && (ny, nx) < (y, x)) {
                        continue 'pixel;
                    }
                }
            }
            out.push(Corner { x: x as u32, y: y as u32, response: v });
        }
    }
    // Stable: equal responses keep scan order.
    out.sort_by(|a, b| b.response.total_cmp(&a.response));
    Ok(out)
}

/// Full detection: response, adaptive threshold, NMS, then the count cap.
///
/// A flat or edge-only frame (no positive response) yields no corners.
pub fn detect_corners(grads: &GradientField, params: &HarrisParams) -> Result<Vec<Corner>> {
    params.validate()?;
    let resp = corner_response(grads, params.window, params.k)?;
    let max = resp.max();
    if max <= 0.0 {
        return Ok(Vec::new());
    }
    // Local maxima do not depend on the threshold; raising it drops a tail of the sorted list.
    let mut corners = non_max_suppress(&resp, params.alpha * max, params.nms_radius)?;
    if corners.len() > params.target_count {
        let t = corners[params.target_count - 1].response;
        corners.retain(|c| c.response >= t);
    }
    corners.truncate(params.target_count);
    Ok(corners)
}
