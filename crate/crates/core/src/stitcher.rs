//! Panorama accumulation with feathered blending.

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::matcher::FrameTransform;
use crate::pipeline::{Pipeline, StageTiming};

/// Largest canvas side the stitcher will grow to.
pub const MAX_CANVAS_SIDE: i64 = 1 << 15;
const EDGE_EPS: f64 = 1e-9;

/// Canvas plus the blend accumulators behind it.
///
/// Canvas pixel `(cx, cy)` shows frame-0 coordinate `(cx - ox, cy - oy)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Panorama {
    canvas: GrayImage,
    origin: (i64, i64),
    coverage: Vec<u32>,
    weight: Vec<f64>,
    accum: Vec<f64>,
}

impl Panorama {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn canvas(&self) -> &GrayImage {
        &self.canvas
    }

    pub fn origin_offset(&self) -> (i64, i64) {
        self.origin
    }

    /// Number of frames covering each canvas pixel.
    pub fn coverage(&self) -> &[u32] {
        &self.coverage
    }

    /// Sum of per-pixel feather weights contributed so far.
    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn is_empty(&self) -> bool {
        self.canvas.width() == 0
    }

    fn grow_to(&mut self, x0: i64, y0: i64, x1: i64, y1: i64) {
        // Requested bounds are frame-0 coordinates, inclusive.
        let (ox, oy) = self.origin;
        let (cw, ch) = (self.canvas.width() as i64, self.canvas.height() as i64);
        let (nx0, ny0, nx1, ny1) = if self.is_empty() {
            (x0, y0, x1, y1)
        } else {
            (x0.min(-ox), y0.min(-oy), x1.max(cw - 1 - ox), y1.max(ch - 1 - oy))
        };
        let (nw, nh) = ((nx1 - nx0 + 1) as usize, (ny1 - ny0 + 1) as usize);
        if !self.is_empty() && (nw as i64, nh as i64) == (cw, ch) {
            return;
        }
        let mut canvas = vec![0u8; nw * nh];
        let mut coverage = vec![0u32; nw * nh];
        let mut weight = vec![0f64; nw * nh];
        let mut accum = vec![0f64; nw * nh];
        // Old canvas position inside the new one.
        let (sx, sy) = ((-ox - nx0) as usize, (-oy - ny0) as usize);
        for y in 0..ch as usize {
            let src = y * cw as usize..(y + 1) * cw as usize;
            let dst = (y + sy) * nw + sx;
            let dst = dst..dst + cw as usize;
            canvas[dst.clone()].copy_from_slice(&self.canvas.data()[src.clone()]);
            coverage[dst.clone()].copy_from_slice(&self.coverage[src.clone()]);
            weight[dst.clone()].copy_from_slice(&self.weight[src.clone()]);
            accum[dst].copy_from_slice(&self.accum[src]);
        }
        self.canvas = GrayImage::new(nw, nh, canvas).expect("sized above");
        self.coverage = coverage;
        self.weight = weight;
        self.accum = accum;
        self.origin = (-nx0, -ny0);
    }

    /// Warps `frame` by `t` (frame → frame-0 coordinates) and blends it in.
    pub fn composite(&mut self, frame: &GrayImage, t: &FrameTransform) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::DegenerateTransform(format!("non-finite transform {t:?}")));
        }
        let (w, h) = (frame.width(), frame.height());
        if w == 0 || h == 0 {
            return Err(Error::DimensionMismatch("empty frame".into()));
        }
        let (wf, hf) = ((w - 1) as f64, (h - 1) as f64);
        let pts = [t.apply(0.0, 0.0), t.apply(wf, 0.0), t.apply(0.0, hf), t.apply(wf, hf)];
        let lo = |f: fn(&(f64, f64)) -> f64| (pts.iter().map(f).fold(f64::INFINITY, f64::min) - EDGE_EPS).ceil() as i64;
        let hi =
            |f: fn(&(f64, f64)) -> f64| (pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max) + EDGE_EPS).floor() as i64;
        let (x0, y0, x1, y1) = (lo(|p| p.0), lo(|p| p.1), hi(|p| p.0), hi(|p| p.1));

        let (ox, oy) = self.origin;
        let (cw, ch) = (self.canvas.width() as i64, self.canvas.height() as i64);
        let (ux0, ux1) = if self.is_empty() { (x0, x1) } else { (x0.min(-ox), x1.max(cw - 1 - ox)) };
        let (uy0, uy1) = if self.is_empty() { (y0, y1) } else { (y0.min(-oy), y1.max(ch - 1 - oy)) };
        if ux1 - ux0 + 1 > MAX_CANVAS_SIDE || uy1 - uy0 + 1 > MAX_CANVAS_SIDE {
            return Err(Error::DegenerateTransform(format!("canvas would exceed {MAX_CANVAS_SIDE} px: {t:?}")));
        }
        self.grow_to(x0, y0, x1, y1);

        let inv = t.inverse();
        let (ox, oy) = self.origin;
        let cw = self.canvas.width();
        let px = frame.data();
        for fy in y0..=y1 {
            for fx in x0..=x1 {
                let (mut sx, mut sy) = inv.apply(fx as f64, fy as f64);
                if sx < -EDGE_EPS || sy < -EDGE_EPS || sx > wf + EDGE_EPS || sy > hf + EDGE_EPS {
                    continue;
                }
                sx = sx.clamp(0.0, wf);
                sy = sy.clamp(0.0, hf);
                let (ix, iy) = (sx.floor() as usize, sy.floor() as usize);
                let (ax, ay) = (sx - ix as f64, sy - iy as f64);
                let (jx, jy) = ((ix + 1).min(w - 1), (iy + 1).min(h - 1));
                let v = |x: usize, y: usize| px[y * w + x] as f64;
                let top = v(ix, iy) * (1.0 - ax) + v(jx, iy) * ax;
                let bottom = v(ix, jy) * (1.0 - ax) + v(jx, jy) * ax;
                let value = top * (1.0 - ay) + bottom * ay;
                // Feather: distance (in pixels, ≥ 1 inside) to the nearest frame edge.
                let feather = (sx + 1.0).min(w as f64 - sx).min(sy + 1.0).min(h as f64 - sy);

                let ci = (fy + oy) as usize * cw + (fx + ox) as usize;
                self.accum[ci] += feather * value;
                self.weight[ci] += feather;
                self.coverage[ci] += 1;
                let blended = (self.accum[ci] / self.weight[ci]).round().clamp(0.0, 255.0) as u8;
                self.canvas.set((fx + ox) as usize, (fy + oy) as usize, blended);
            }
        }
        Ok(())
    }
}

/// Functional form of [`Panorama::composite`].
pub fn composite(mut pan: Panorama, frame: &GrayImage, t: &FrameTransform) -> Result<Panorama> {
    pan.composite(frame, t)?;
    Ok(pan)
}

/// One entry of the transform log: how frame `from` maps into frame `to`,
/// plus the accumulated frame→frame-0 transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub from: usize,
    pub to: usize,
    #[serde(flatten)]
    pub transform: FrameTransform,
    pub cumulative: FrameTransform,
    pub full_frame_retry: bool,
}

#[derive(Clone, Debug)]
pub struct StitchOutput {
    pub panorama: Panorama,
    pub log: Vec<PairRecord>,
    pub timings: Vec<StageTiming>,
}

impl StitchOutput {
    pub fn log_json(&self) -> String {
        serde_json::to_string_pretty(&self.log).expect("plain data")
    }
}

/// A failed run; `partial` holds the panorama up to the last good frame when
/// processing had started.
#[derive(Debug)]
pub struct StitchFailure {
    pub error: Error,
    pub partial: Option<Box<StitchOutput>>,
}

impl std::fmt::Display for StitchFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for StitchFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for StitchFailure {
    fn from(error: Error) -> Self {
        Self { error, partial: None }
    }
}

/// Runs the full pipeline over adjacent frame pairs and composites every
/// frame with its accumulated transform.
pub fn stitch_sequence(frames: &[GrayImage], config: &Config) -> Result<StitchOutput, StitchFailure> {
    if frames.len() < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 frames, got {}", frames.len())).into());
    }
    let (w, h) = (frames[0].width(), frames[0].height());
    if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| (f.width(), f.height()) != (w, h)) {
        return Err(
            Error::DimensionMismatch(format!("frame {i} is {}x{}, frame 0 is {w}x{h}", f.width(), f.height())).into()
        );
    }
    let pipeline = Pipeline::new(*config)?;

    let mut out = StitchOutput { panorama: Panorama::new(), log: Vec::new(), timings: Vec::new() };
    let mut prev = pipeline.extract(&frames[0], 0, &mut out.timings)?;
    let identity = FrameTransform::identity();
    let start = std::time::Instant::now();
    out.panorama.composite(&frames[0], &identity)?;
    out.timings.push(StageTiming {
        frame_index: 0,
        stage: "composite".into(),
        milliseconds: start.elapsed().as_secs_f64() * 1e3,
    });

    let mut cumulative = identity;
    for (k, frame) in frames.iter().enumerate().skip(1) {
        let step = |out: &mut StitchOutput, cumulative: &FrameTransform| -> Result<_> {
            let feats = pipeline.extract(frame, k, &mut out.timings)?;
            let pair = pipeline.align_pair(&prev, &feats, k - 1, &mut out.timings)?;
            let t = pair.transform?;
            let retried = pair.fell_back;
            let next = cumulative.compose(&t);
            let start = std::time::Instant::now();
            out.panorama.composite(frame, &next)?;
            out.timings.push(StageTiming {
                frame_index: k,
                stage: "composite".into(),
                milliseconds: start.elapsed().as_secs_f64() * 1e3,
            });
            Ok((feats, t, next, retried))
        };
        match step(&mut out, &cumulative) {
            Ok((feats, t, next, retried)) => {
                out.log.push(PairRecord {
                    from: k,
                    to: k - 1,
                    transform: t,
                    cumulative: next,
                    full_frame_retry: retried,
                });
                cumulative = next;
                prev = feats;
            }
            Err(e) => {
                return Err(StitchFailure {
                    error: Error::PipelineFailure { pair: k - 1, source: Box::new(e) },
                    partial: Some(Box::new(out)),
                })
            }
        }
    }
    Ok(out)
}
