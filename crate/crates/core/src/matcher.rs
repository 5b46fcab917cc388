//! Overlap-restricted descriptor matching and robust frame alignment.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::Descriptor;
use crate::error::{Error, Result};
use crate::harris::Corner;

/// Per-frame rotation envelope, degrees.
pub const MAX_THETA_DEG: f64 = 5.0;
pub const MIN_CONSENSUS: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PanDirection {
    #[default]
    LeftToRight,
    RightToLeft,
}

/// Which x-range of each frame takes part in matching.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverlapRegions {
    pub a: Range<u32>,
    pub b: Range<u32>,
}

/// Half-frame overlap ranges: for a left-to-right pan, the right half of
/// frame A against the left half of frame B.
pub fn overlap_regions(width: u32, direction: PanDirection) -> Result<OverlapRegions> {
    if width < 32 {
        return Err(Error::InvalidParameter(format!("frame width {width} < 32")));
    }
    let mid = width / 2;
    Ok(match direction {
        PanDirection::LeftToRight => OverlapRegions { a: mid..width, b: 0..mid },
        PanDirection::RightToLeft => OverlapRegions { a: 0..mid, b: mid..width },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: f64,
    /// Larger of the two directional nearest/second-nearest ratios.
    pub ratio: f64,
}

pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

#[derive(Clone, Copy, Debug)]
struct Nearest {
    best: usize,
    d1: f64,
    /// `None` when the other side has a single descriptor.
    d2: Option<f64>,
}

impl Nearest {
    fn ratio(&self) -> f64 {
        match self.d2 {
            None => 0.0,
            Some(d2) if d2 > 0.0 => self.d1.sqrt() / d2.sqrt(),
            // Two candidates at distance zero: fully ambiguous.
            Some(_) => 1.0,
        }
    }
}

fn nearest_in(query: &[f32], set: &[Descriptor]) -> Option<Nearest> {
    let mut best: Option<(usize, f64)> = None;
    let mut second: Option<f64> = None;
    for (j, d) in set.iter().enumerate() {
        let dist = squared_distance(query, &d.vec);
        match best {
            Some((_, b)) if dist >= b => {
                if second.is_none_or(|s| dist < s) {
                    second = Some(dist);
                }
            }
            _ => {
                second = best.map(|(_, b)| b);
                best = Some((j, dist));
            }
        }
    }
    best.map(|(j, d1)| Nearest { best: j, d1, d2: second })
}

/// Mutual-nearest matches passing the ratio test in both directions, sorted
/// by ascending ratio (then by `index_a`).
pub fn match_descriptors(a: &[Descriptor], b: &[Descriptor], ratio_max: f64) -> Result<Vec<Match>> {
    if !(ratio_max > 0.0 && ratio_max < 1.0) {
        return Err(Error::InvalidParameter(format!("ratio_max {ratio_max} outside (0, 1)")));
    }
    let ab: Vec<Option<Nearest>> = a.par_iter().map(|d| nearest_in(&d.vec, b)).collect();
    let ba: Vec<Option<Nearest>> = b.par_iter().map(|d| nearest_in(&d.vec, a)).collect();
    let mut out = Vec::new();
    for (i, n) in ab.iter().enumerate() {
        let Some(n) = n else { continue };
        let Some(back) = ba[n.best] else { continue };
        if back.best != i {
            continue;
        }
        let ratio = n.ratio().max(back.ratio());
        if ratio <= ratio_max {
            out.push(Match { index_a: i, index_b: n.best, distance: n.d1.sqrt(), ratio });
        }
    }
    out.sort_by(|x, y| x.ratio.total_cmp(&y.ratio));
    Ok(out)
}

/// Result of matching with an overlap restriction: indices refer to the
/// unrestricted inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapMatches {
    pub matches: Vec<Match>,
    /// Descriptors of A queried against B.
    pub attempted: usize,
    /// Descriptor pairs whose distance was evaluated (`|A'| * |B'|`).
    pub candidate_pairs: usize,
}

/// Matches only descriptors whose corners fall inside the given x-ranges;
/// `None` matches everything.
pub fn match_with_regions(
    a: &[Descriptor],
    b: &[Descriptor],
    regions: Option<&OverlapRegions>,
    ratio_max: f64,
) -> Result<OverlapMatches> {
    let pick = |set: &[Descriptor], range: Option<&Range<u32>>| -> (Vec<usize>, Vec<Descriptor>) {
        set.iter()
            .enumerate()
            .filter(|(_, d)| range.is_none_or(|r| r.contains(&d.corner.x)))
            .map(|(i, d)| (i, d.clone()))
            .unzip()
    };
    let (ia, sa) = pick(a, regions.map(|r| &r.a));
    let (ib, sb) = pick(b, regions.map(|r| &r.b));
    let matches = match_descriptors(&sa, &sb, ratio_max)?
        .into_iter()
        .map(|m| Match { index_a: ia[m.index_a], index_b: ib[m.index_b], ..m })
        .collect();
    Ok(OverlapMatches { matches, attempted: sa.len(), candidate_pairs: sa.len() * sb.len() })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionModel {
    #[default]
    Translation,
    /// Rotation plus translation, unit scale.
    Similarity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub iterations: usize,
    pub inlier_tol: f64,
    pub seed: u64,
    pub model: MotionModel,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { iterations: 200, inlier_tol: 2.0, seed: 42, model: MotionModel::Translation }
    }
}

/// Maps frame-B coordinates into frame-A coordinates:
/// `p_a = R(theta) p_b + (dx, dy)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameTransform {
    pub dx: f64,
    pub dy: f64,
    pub theta_deg: f64,
    pub inliers: usize,
    pub residual_rms: f64,
    pub seed: u64,
}

impl FrameTransform {
    pub fn identity() -> Self {
        Self::from_params(0.0, 0.0, 0.0)
    }

    pub fn from_params(dx: f64, dy: f64, theta_deg: f64) -> Self {
        Self { dx, dy, theta_deg, inliers: 0, residual_rms: 0.0, seed: 0 }
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.theta_deg.to_radians().sin_cos();
        (c * x - s * y + self.dx, s * x + c * y + self.dy)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &FrameTransform) -> FrameTransform {
        let (dx, dy) = self.apply(other.dx, other.dy);
        FrameTransform { dx, dy, theta_deg: self.theta_deg + other.theta_deg, ..*other }
    }

    pub fn inverse(&self) -> FrameTransform {
        let (s, c) = (-self.theta_deg).to_radians().sin_cos();
        let dx = -(c * self.dx - s * self.dy);
        let dy = -(s * self.dx + c * self.dy);
        FrameTransform { dx, dy, theta_deg: -self.theta_deg, ..*self }
    }

    pub fn is_finite(&self) -> bool {
        self.dx.is_finite() && self.dy.is_finite() && self.theta_deg.is_finite()
    }
}

type Point = (f64, f64);

fn fit_translation(pairs: &[(Point, Point)]) -> FrameTransform {
    let n = pairs.len() as f64;
    let (sx, sy) = pairs.iter().fold((0.0, 0.0), |(sx, sy), ((ax, ay), (bx, by))| (sx + ax - bx, sy + ay - by));
    FrameTransform::from_params(sx / n, sy / n, 0.0)
}

/// Least-squares rotation + translation (2-D Procrustes without scale).
fn fit_similarity(pairs: &[(Point, Point)]) -> FrameTransform {
    let n = pairs.len() as f64;
    let (mut cax, mut cay, mut cbx, mut cby) = (0.0, 0.0, 0.0, 0.0);
    for ((ax, ay), (bx, by)) in pairs {
        cax += ax;
        cay += ay;
        cbx += bx;
        cby += by;
    }
    let (cax, cay, cbx, cby) = (cax / n, cay / n, cbx / n, cby / n);
    let (mut dot, mut cross) = (0.0, 0.0);
    for ((ax, ay), (bx, by)) in pairs {
        let (px, py) = (bx - cbx, by - cby);
        let (qx, qy) = (ax - cax, ay - cay);
        dot += px * qx + py * qy;
        cross += px * qy - py * qx;
    }
    let theta = cross.atan2(dot);
    let (s, c) = theta.sin_cos();
    FrameTransform::from_params(cax - (c * cbx - s * cby), cay - (s * cbx + c * cby), theta.to_degrees())
}

fn residual(t: &FrameTransform, (a, b): &(Point, Point)) -> f64 {
    let (x, y) = t.apply(b.0, b.1);
    (x - a.0).hypot(y - a.1)
}

/// Seeded consensus estimate of the B→A transform from matched corners.
pub fn estimate_transform(
    matches: &[Match],
    corners_a: &[Corner],
    corners_b: &[Corner],
    params: &RansacParams,
) -> Result<FrameTransform> {
    if matches.len() < MIN_CONSENSUS {
        return Err(Error::InsufficientMatches(matches.len()));
    }
    let pairs: Vec<(Point, Point)> = matches
        .iter()
        .map(|m| {
            let (a, b) = (corners_a[m.index_a], corners_b[m.index_b]);
            ((a.x as f64, a.y as f64), (b.x as f64, b.y as f64))
        })
        .collect();
    let fit = |set: &[(Point, Point)]| match params.model {
        MotionModel::Translation => fit_translation(set),
        MotionModel::Similarity => fit_similarity(set),
    };
    let inliers_of = |t: &FrameTransform| -> Vec<usize> {
        (0..pairs.len()).filter(|&i| residual(t, &pairs[i]) <= params.inlier_tol).collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Vec<usize> = Vec::new();
    for _ in 0..params.iterations {
        let hypothesis = match params.model {
            MotionModel::Translation => fit_translation(&[pairs[rng.gen_range(0..pairs.len())]]),
            MotionModel::Similarity => {
                let i = rng.gen_range(0..pairs.len());
                let j = rng.gen_range(0..pairs.len() - 1);
                let j = if j >= i { j + 1 } else { j };
                let (pi, pj) = (pairs[i], pairs[j]);
                if pi.0 == pj.0 || pi.1 == pj.1 {
                    continue;
                }
                fit_similarity(&[pi, pj])
            }
        };
        if hypothesis.theta_deg.abs() > MAX_THETA_DEG {
            continue;
        }
        let inl = inliers_of(&hypothesis);
        if inl.len() > best.len() {
            best = inl;
        }
    }
    if best.len() < MIN_CONSENSUS {
        return Err(Error::NoConsensus { best: best.len() });
    }

    let subset = |idx: &[usize]| idx.iter().map(|&i| pairs[i]).collect::<Vec<_>>();
    let mut model = fit(&subset(&best));
    // One re-selection pass under the refined model.
    let refined = inliers_of(&model);
    if refined.len() >= best.len() {
        best = refined;
        model = fit(&subset(&best));
    }
    if !model.is_finite() || model.theta_deg.abs() > MAX_THETA_DEG {
        return Err(Error::DegenerateTransform(format!("{model:?}")));
    }
    let sq: f64 = best.iter().map(|&i| residual(&model, &pairs[i]).powi(2)).sum();
    Ok(FrameTransform {
        inliers: best.len(),
        residual_rms: (sq / best.len() as f64).sqrt(),
        seed: params.seed,
        ..model
    })
}
