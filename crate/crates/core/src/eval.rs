//! Benchmark harness: classic full-frame matching against the optimized
//! half-overlap pipeline on synthetic pans with known motion.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{Config, MatchRegion};
use crate::descriptor::OrientationMethod;
use crate::error::{Error, Result};
use crate::harris::Corner;
use crate::image::GrayImage;
use crate::matcher::{FrameTransform, Match};
use crate::pipeline::{Pipeline, StageTiming};

/// Per-frame horizontal motion bound as a fraction of frame width.
pub const MAX_DX_FRACTION: f64 = 0.10;
/// Per-frame rotation bound, degrees.
pub const MAX_THETA_PER_FRAME: f64 = 1.2;
/// A match is correct when ground truth puts its points within this distance.
pub const CORRECT_TOL_PX: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceParams {
    pub frame_width: usize,
    pub frame_height: usize,
    pub n_frames: usize,
    pub dx_per_frame: f64,
    pub theta_per_frame: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SequenceParams {
    fn default() -> Self {
        Self {
            frame_width: 640,
            frame_height: 480,
            n_frames: 5,
            dx_per_frame: 48.0,
            theta_per_frame: 0.0,
            noise_sigma: 0.0,
            seed: 7,
        }
    }
}

impl SequenceParams {
    pub fn validate(&self) -> Result<()> {
        if self.frame_width < 32 || self.frame_height < 32 {
            return Err(Error::InvalidParameter("frames must be at least 32x32".into()));
        }
        if self.n_frames == 0 {
            return Err(Error::InvalidParameter("n_frames must be >= 1".into()));
        }
        let max_dx = MAX_DX_FRACTION * self.frame_width as f64;
        if self.dx_per_frame.is_nan() || self.dx_per_frame.abs() > max_dx {
            return Err(Error::InvalidParameter(format!(
                "dx per frame {} exceeds the motion envelope of 10% of frame width ({max_dx} px)",
                self.dx_per_frame
            )));
        }
        if self.theta_per_frame.is_nan() || self.theta_per_frame.abs() > MAX_THETA_PER_FRAME {
            return Err(Error::InvalidParameter(format!(
                "rotation per frame {} exceeds the {MAX_THETA_PER_FRAME} degree envelope",
                self.theta_per_frame
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// For each frame, the map from frame coordinates to master coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frame_to_master: Vec<FrameTransform>,
}

impl GroundTruth {
    /// Frame `k + 1` → frame `k`.
    pub fn pair(&self, k: usize) -> FrameTransform {
        self.frame_to_master[k].inverse().compose(&self.frame_to_master[k + 1])
    }

    /// Frame `k` → frame 0.
    pub fn cumulative(&self, k: usize) -> FrameTransform {
        self.frame_to_master[0].inverse().compose(&self.frame_to_master[k])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub frames: Vec<GrayImage>,
    pub truth: GroundTruth,
}

/// Crops a seeded pan (optionally rotating) out of `master`.
///
/// Frame `k` is centered at `(k * dx + (W-1)/2, y0 + (H-1)/2)` in the master
/// with rotation `k * theta` about its center; `y0` centers the band vertically.
pub fn generate_sequence(master: &GrayImage, params: &SequenceParams) -> Result<Sequence> {
    params.validate()?;
    let (w, h) = (params.frame_width, params.frame_height);
    if master.width() < w || master.height() < h {
        return Err(Error::MasterTooSmall(format!(
            "{}x{} master cannot hold {w}x{h} frames",
            master.width(),
            master.height()
        )));
    }
    let y0 = ((master.height() - h) / 2) as f64;
    let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    let frame_to_master: Vec<FrameTransform> = (0..params.n_frames)
        .map(|k| {
            let theta = k as f64 * params.theta_per_frame;
            let rot = FrameTransform::from_params(0.0, 0.0, theta);
            let (rx, ry) = rot.apply(cx, cy);
            FrameTransform::from_params(k as f64 * params.dx_per_frame + cx - rx, y0 + cy - ry, theta)
        })
        .collect();

    let (mw, mh) = ((master.width() - 1) as f64, (master.height() - 1) as f64);
    for (k, t) in frame_to_master.iter().enumerate() {
        for (x, y) in [(0.0, 0.0), ((w - 1) as f64, 0.0), (0.0, (h - 1) as f64), ((w - 1) as f64, (h - 1) as f64)] {
            let (mx, my) = t.apply(x, y);
            if mx < -1e-9 || my < -1e-9 || mx > mw + 1e-9 || my > mh + 1e-9 {
                return Err(Error::MasterTooSmall(format!(
                    "frame {k} corner maps to ({mx:.2}, {my:.2}) outside master"
                )));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = (params.noise_sigma > 0.0).then(|| Normal::new(0.0, params.noise_sigma).expect("sigma validated"));
    let frames = frame_to_master
        .iter()
        .map(|t| {
            let mut frame = render_frame(master, t, w, h);
            if let Some(n) = &noise {
                for y in 0..h {
                    for x in 0..w {
                        let v = frame.get(x, y) as f64 + n.sample(&mut rng);
                        frame.set(x, y, v.round().clamp(0.0, 255.0) as u8);
                    }
                }
            }
            frame
        })
        .collect();
    Ok(Sequence { frames, truth: GroundTruth { frame_to_master } })
}

fn render_frame(master: &GrayImage, t: &FrameTransform, w: usize, h: usize) -> GrayImage {
    let integral = t.theta_deg == 0.0 && t.dx.fract() == 0.0 && t.dy.fract() == 0.0;
    if integral {
        return master.crop(t.dx as usize, t.dy as usize, w, h).expect("bounds checked");
    }
    let (mw, mh) = (master.width(), master.height());
    GrayImage::from_fn(w, h, |x, y| {
        let (mx, my) = t.apply(x as f64, y as f64);
        let (mx, my) = (mx.clamp(0.0, (mw - 1) as f64), my.clamp(0.0, (mh - 1) as f64));
        let (ix, iy) = (mx.floor() as usize, my.floor() as usize);
        let (ax, ay) = (mx - ix as f64, my - iy as f64);
        let (jx, jy) = ((ix + 1).min(mw - 1), (iy + 1).min(mh - 1));
        let v = |x: usize, y: usize| master.get(x, y) as f64;
        let top = v(ix, iy) * (1.0 - ax) + v(jx, iy) * ax;
        let bottom = v(ix, jy) * (1.0 - ax) + v(jx, jy) * ax;
        (top * (1.0 - ay) + bottom * ay).round() as u8
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Full-frame search with Gaussian-weighted 36-bin orientation.
    ClassicFull,
    /// Half-overlap search with the folded 3×3 orientation.
    OptimizedHalf,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::ClassicFull => "classic-full",
            Variant::OptimizedHalf => "optimized-half",
        }
    }

    pub fn configure(self, base: &Config) -> Config {
        let mut c = *base;
        match self {
            Variant::ClassicFull => {
                c.descriptor.orientation = OrientationMethod::Classic;
                c.matcher.region = MatchRegion::Full;
            }
            Variant::OptimizedHalf => {
                c.descriptor.orientation = OrientationMethod::Folded;
                c.matcher.region = MatchRegion::Half;
            }
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub variant: String,
    pub pairs: usize,
    pub pair_failures: usize,
    /// Pairs aligned only after the full-frame retry.
    pub fallbacks: usize,
    pub corners_detected: usize,
    pub candidate_pairs: usize,
    pub matches_attempted: usize,
    pub matches_accepted: usize,
    pub matches_correct: usize,
    /// Correct / accepted; 0 when nothing was accepted.
    pub precision: f64,
    /// Mean distance, over aligned pairs, between where the estimated and
    /// true transforms send the frame center.
    pub transform_error_px: Option<f64>,
    /// Wall-clock totals per stage; excluded from serialized reports.
    #[serde(skip)]
    pub stage_ms: BTreeMap<String, f64>,
}

fn point(c: &Corner) -> (f64, f64) {
    (c.x as f64, c.y as f64)
}

/// Correct matches judged by the pair transform: `|T(p_b) - p_a| ≤ tol`.
pub fn correct_by_pair_transform(truth: &FrameTransform, matches: &[Match], ca: &[Corner], cb: &[Corner]) -> usize {
    matches
        .iter()
        .filter(|m| {
            let (ax, ay) = point(&ca[m.index_a]);
            let (bx, by) = point(&cb[m.index_b]);
            let (px, py) = truth.apply(bx, by);
            (px - ax).hypot(py - ay) <= CORRECT_TOL_PX
        })
        .count()
}

/// Same judgement re-derived independently: both points sent to master coordinates.
pub fn correct_by_master(
    a_to_master: &FrameTransform,
    b_to_master: &FrameTransform,
    matches: &[Match],
    ca: &[Corner],
    cb: &[Corner],
) -> usize {
    matches
        .iter()
        .filter(|m| {
            let (ax, ay) = point(&ca[m.index_a]);
            let (bx, by) = point(&cb[m.index_b]);
            let (amx, amy) = a_to_master.apply(ax, ay);
            let (bmx, bmy) = b_to_master.apply(bx, by);
            (amx - bmx).hypot(amy - bmy) <= CORRECT_TOL_PX
        })
        .count()
}

/// Runs one variant over every adjacent pair; pair failures are counted, not fatal.
pub fn run_variant(seq: &Sequence, variant: Variant, base: &Config) -> Result<BenchReport> {
    let pipeline = Pipeline::new(variant.configure(base))?;
    let mut timings: Vec<StageTiming> = Vec::new();
    let mut report = BenchReport {
        variant: variant.name().to_string(),
        pairs: seq.frames.len().saturating_sub(1),
        pair_failures: 0,
        fallbacks: 0,
        corners_detected: 0,
        candidate_pairs: 0,
        matches_attempted: 0,
        matches_accepted: 0,
        matches_correct: 0,
        precision: 0.0,
        transform_error_px: None,
        stage_ms: BTreeMap::new(),
    };

    let mut feats = Vec::with_capacity(seq.frames.len());
    for (k, f) in seq.frames.iter().enumerate() {
        match pipeline.extract(f, k, &mut timings) {
            Ok(x) => {
                report.corners_detected += x.corners.len();
                feats.push(Some(x));
            }
            Err(_) => feats.push(None),
        }
    }

    let mut errors = Vec::new();
    for k in 0..report.pairs {
        let (Some(a), Some(b)) = (&feats[k], &feats[k + 1]) else {
            report.pair_failures += 1;
            continue;
        };
        let outcome = match pipeline.align_pair(a, b, k, &mut timings) {
            Ok(o) => o,
            Err(_) => {
                report.pair_failures += 1;
                continue;
            }
        };
        let (ca, cb) = (a.descriptor_corners(), b.descriptor_corners());
        let m = &outcome.matches;
        report.fallbacks += outcome.fell_back as usize;
        report.candidate_pairs += m.candidate_pairs;
        report.matches_attempted += m.attempted;
        report.matches_accepted += m.matches.len();
        report.matches_correct += correct_by_pair_transform(&seq.truth.pair(k), &m.matches, &ca, &cb);
        match outcome.transform {
            Ok(t) => {
                let w = seq.frames[k].width() as f64;
                let h = seq.frames[k].height() as f64;
                let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
                let (ex, ey) = t.apply(cx, cy);
                let (gx, gy) = seq.truth.pair(k).apply(cx, cy);
                errors.push((ex - gx).hypot(ey - gy));
            }
            Err(_) => report.pair_failures += 1,
        }
    }
    if report.matches_accepted > 0 {
        report.precision = report.matches_correct as f64 / report.matches_accepted as f64;
    }
    if !errors.is_empty() {
        report.transform_error_px = Some(errors.iter().sum::<f64>() / errors.len() as f64);
    }
    for t in timings {
        *report.stage_ms.entry(t.stage).or_insert(0.0) += t.milliseconds;
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Self::Text),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidParameter(format!("unknown report format '{other}'"))),
        }
    }
}

pub const REPORT_NOTE: &str = "classic-full approximates classic SIFT-style matching: \
Gaussian-weighted 36-bin orientation (radius 4.5, sigma 1.5), full-frame search";

const COLUMNS: [&str; 12] = [
    "variant",
    "pairs",
    "pair_failures",
    "fallbacks",
    "corners_detected",
    "candidate_pairs",
    "matches_attempted",
    "matches_accepted",
    "matches_correct",
    "precision",
    "transform_error_px",
    "stage_total_ms",
];

fn row(r: &BenchReport, with_timing: bool) -> Vec<String> {
    let mut cells = vec![
        r.variant.clone(),
        r.pairs.to_string(),
        r.pair_failures.to_string(),
        r.fallbacks.to_string(),
        r.corners_detected.to_string(),
        r.candidate_pairs.to_string(),
        r.matches_attempted.to_string(),
        r.matches_accepted.to_string(),
        r.matches_correct.to_string(),
        format!("{:.6}", r.precision),
        r.transform_error_px.map_or_else(|| "NA".to_string(), |e| format!("{e:.6}")),
    ];
    if with_timing {
        cells.push(format!("{:.3}", r.stage_ms.values().sum::<f64>()));
    }
    cells
}

/// Side-by-side table, one row per report. Timings are omitted so that
/// identical seeds give identical bytes; see [`emit_timings`].
pub fn emit_report(reports: &[BenchReport], format: ReportFormat) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::InvalidParameter("emit_report needs at least one report".into()));
    }
    let cols = &COLUMNS[..COLUMNS.len() - 1];
    Ok(match format {
        ReportFormat::Csv => {
            let mut s = cols.join(",");
            s.push('\n');
            for r in reports {
                s.push_str(&row(r, false).join(","));
                s.push('\n');
            }
            s
        }
        ReportFormat::Json => {
            let doc = serde_json::json!({ "note": REPORT_NOTE, "reports": reports });
            let mut s = serde_json::to_string_pretty(&doc)?;
            s.push('\n');
            s
        }
        ReportFormat::Text => {
            let rows: Vec<Vec<String>> = reports.iter().map(|r| row(r, false)).collect();
            let widths: Vec<usize> = (0..cols.len())
                .map(|i| rows.iter().map(|r| r[i].len()).chain([cols[i].len()]).max().unwrap_or(0))
                .collect();
            let line = |cells: Vec<&str>| {
                cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:<w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
                    .trim_end()
                    .to_string()
            };
            let mut s = format!("# {REPORT_NOTE}\n");
            s.push_str(&line(cols.to_vec()));
            s.push('\n');
            for r in &rows {
                s.push_str(&line(r.iter().map(String::as_str).collect()));
                s.push('\n');
            }
            s
        }
    })
}

/// `variant,stage,milliseconds` CSV of the per-stage totals.
pub fn emit_timings(reports: &[BenchReport]) -> String {
    let mut s = String::from("variant,stage,milliseconds\n");
    for r in reports {
        for (stage, ms) in &r.stage_ms {
            s.push_str(&format!("{},{},{:.3}\n", r.variant, stage, ms));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::textured_image;

    fn small_params() -> SequenceParams {
        SequenceParams { frame_width: 64, frame_height: 48, n_frames: 5, dx_per_frame: 6.0, ..Default::default() }
    }

    #[test]
    fn identical_frames_for_zero_motion() {
        let master = textured_image(100, 60, 1);
        let p = SequenceParams { n_frames: 2, dx_per_frame: 0.0, ..small_params() };
        let s = generate_sequence(&master, &p).unwrap();
        assert_eq!(s.frames[0], s.frames[1]);
        let t = s.truth.pair(0);
        assert_eq!((t.dx, t.dy, t.theta_deg), (0.0, 0.0, 0.0));
    }

    #[test]
    fn crops_follow_arithmetic_progression() {
        let master = textured_image(120, 60, 2);
        let s = generate_sequence(&master, &small_params()).unwrap();
        for (k, f) in s.frames.iter().enumerate() {
            assert_eq!(*f, master.crop(6 * k, 6, 64, 48).unwrap());
            assert_eq!(s.truth.frame_to_master[k].dx, 6.0 * k as f64);
            assert_eq!(s.truth.cumulative(k).dx, 6.0 * k as f64);
        }
    }

    #[test]
    fn rotating_noisy_sequence_is_deterministic() {
        let master = textured_image(200, 120, 3);
        let p = SequenceParams {
            n_frames: 3,
            dx_per_frame: 6.0,
            theta_per_frame: 1.0,
            noise_sigma: 2.0,
            seed: 7,
            ..small_params()
        };
        let a = generate_sequence(&master, &p).unwrap();
        let b = generate_sequence(&master, &p).unwrap();
        assert_eq!(a, b);
        assert!((a.truth.pair(1).theta_deg - 1.0).abs() < 1e-12);
    }

    #[test]
    fn envelope_and_size_checks() {
        let master = textured_image(100, 60, 1);
        let too_fast = SequenceParams { dx_per_frame: 6.5, ..small_params() };
        assert!(matches!(generate_sequence(&master, &too_fast), Err(Error::InvalidParameter(_))));
        let too_rot = SequenceParams { theta_per_frame: 1.3, ..small_params() };
        assert!(matches!(generate_sequence(&master, &too_rot), Err(Error::InvalidParameter(_))));
        let narrow = textured_image(80, 60, 1);
        assert!(matches!(generate_sequence(&narrow, &small_params()), Err(Error::MasterTooSmall(_))));
    }

    #[test]
    fn precision_paths_agree() {
        let truth = GroundTruth {
            frame_to_master: vec![
                FrameTransform::from_params(10.0, 5.0, 0.5),
                FrameTransform::from_params(40.0, 4.0, 1.3),
            ],
        };
        let cb: Vec<Corner> = (0..30).map(|i| Corner { x: 20 + i * 3, y: 10 + (i * 7) % 40, response: 1.0 }).collect();
        let pair = truth.pair(0);
        let ca: Vec<Corner> = cb
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let (x, y) = pair.apply(c.x as f64, c.y as f64);
                let jitter = (i % 5) as f64; // 0..4 px, so some fail the 2 px test
                Corner { x: (x + jitter).round() as u32, y: y.round() as u32, response: 1.0 }
            })
            .collect();
        let matches: Vec<Match> =
            (0..30).map(|i| Match { index_a: i, index_b: i, distance: 0.0, ratio: 0.0 }).collect();
        let p1 = correct_by_pair_transform(&pair, &matches, &ca, &cb);
        let p2 = correct_by_master(&truth.frame_to_master[0], &truth.frame_to_master[1], &matches, &ca, &cb);
        assert_eq!(p1, p2);
        assert!(p1 > 0 && p1 < 30);
    }

    fn dummy(name: &str) -> BenchReport {
        BenchReport {
            variant: name.into(),
            pairs: 4,
            pair_failures: 0,
            fallbacks: 0,
            corners_detected: 100,
            candidate_pairs: 1000,
            matches_attempted: 50,
            matches_accepted: 40,
            matches_correct: 39,
            precision: 0.975,
            transform_error_px: Some(0.25),
            stage_ms: [("harris".to_string(), 1.5)].into(),
        }
    }

    #[test]
    fn report_formats() {
        let text = emit_report(&[dummy("a")], ReportFormat::Text).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 2);
        let csv = emit_report(&[dummy("a"), dummy("b")], ReportFormat::Csv).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("variant,pairs,"));
        assert!(lines[2].starts_with("b,4,0,0,100,1000,50,40,39,0.975000,0.250000"));
        let json = emit_report(&[dummy("a")], ReportFormat::Json).unwrap();
        assert!(!json.contains("stage_ms"));
        assert!(emit_report(&[], ReportFormat::Text).is_err());
        assert!(emit_timings(&[dummy("a")]).contains("a,harris,1.500"));
    }
}
