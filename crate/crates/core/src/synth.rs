//! Deterministic textured test scenes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::GrayImage;

/// Smooth value noise sampled on a `spacing`-pixel lattice.
struct ValueNoise {
    cols: usize,
    spacing: f64,
    values: Vec<f64>,
}

impl ValueNoise {
    fn new(w: usize, h: usize, spacing: usize, rng: &mut ChaCha8Rng) -> Self {
        let cols = w / spacing + 2;
        let rows = h / spacing + 2;
        let values = (0..cols * rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self { cols, spacing: spacing as f64, values }
    }

    fn at(&self, x: usize, y: usize) -> f64 {
        let (fx, fy) = (x as f64 / self.spacing, y as f64 / self.spacing);
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(fx - ix as f64), smooth(fy - iy as f64));
        let v = |cx: usize, cy: usize| self.values[cy * self.cols + cx];
        let top = v(ix, iy) * (1.0 - tx) + v(ix + 1, iy) * tx;
        let bottom = v(ix, iy + 1) * (1.0 - tx) + v(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

/// Two octaves of value noise overlaid with randomly rotated rectangles,
/// which give the scene well-separated corners at every orientation.
pub fn textured_image(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coarse = ValueNoise::new(width, height, 24, &mut rng);
    let fine = ValueNoise::new(width, height, 6, &mut rng);
    let mut plane: Vec<f64> = (0..width * height)
        .map(|i| 128.0 + 45.0 * coarse.at(i % width, i / width) + 12.0 * fine.at(i % width, i / width))
        .collect();

    let n_rects = (width * height / 700).max(4);
    for _ in 0..n_rects {
        let half_w: f64 = rng.gen_range(2.5..16.0);
        let half_h: f64 = rng.gen_range(2.5..16.0);
        let cx = rng.gen_range(0.0..width as f64);
        let cy = rng.gen_range(0.0..height as f64);
        let (sin, cos) = rng.gen_range(0.0..std::f64::consts::PI).sin_cos();
        let delta = if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(25.0..60.0);
        let reach = half_w.hypot(half_h) + 1.0;
        let x0 = (cx - reach).floor().max(0.0) as usize;
        let y0 = (cy - reach).floor().max(0.0) as usize;
        let x1 = ((cx + reach).ceil() as usize).min(width - 1);
        let y1 = ((cy + reach).ceil() as usize).min(height - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (px, py) = (x as f64 - cx, y as f64 - cy);
                let u = px * cos + py * sin;
                let v = py * cos - px * sin;
                // One-pixel soft edge keeps the outline free of staircase artifacts.
                let outside = (u.abs() - half_w).max(v.abs() - half_h);
                let coverage = (0.5 - outside).clamp(0.0, 1.0);
                plane[y * width + x] += delta * coverage;
            }
        }
    }
    let data = plane.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    GrayImage::new(width, height, data).expect("sized above")
}
