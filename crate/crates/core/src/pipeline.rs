//! Per-frame feature extraction and per-pair alignment, shared by the
//! stitcher, the benchmark harness and the CLI.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{Config, MatchRegion};
use crate::cordic::Cordic;
use crate::descriptor::{DescribeStats, Descriptor, DescriptorExtractor};
use crate::error::{Error, Result};
use crate::gradient::{compute_gradients, GradientField};
use crate::harris::{detect_corners, Corner};
use crate::image::GrayImage;
use crate::matcher::{
    estimate_transform, match_with_regions, overlap_regions, FrameTransform, OverlapMatches, OverlapRegions,
};

/// Wall-clock duration of one pipeline stage for one frame (or pair).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub frame_index: usize,
    pub stage: String,
    pub milliseconds: f64,
}

#[derive(Clone, Debug)]
pub struct FrameFeatures {
    pub grads: GradientField,
    pub corners: Vec<Corner>,
    pub descriptors: Vec<Descriptor>,
    pub stats: DescribeStats,
}

impl FrameFeatures {
    pub fn descriptor_corners(&self) -> Vec<Corner> {
        self.descriptors.iter().map(|d| d.corner).collect()
    }
}

#[derive(Debug)]
pub struct PairOutcome {
    /// Matches behind `transform`; the work counters include any fallback attempt.
    pub matches: OverlapMatches,
    pub transform: Result<FrameTransform>,
    /// Whether the full-frame retry produced this outcome.
    pub fell_back: bool,
}

/// Stateless driver built from a validated [`Config`].
#[derive(Clone, Debug)]
pub struct Pipeline {
    config: Config,
    cordic: Cordic,
    extractor: DescriptorExtractor,
}

fn timed<T>(timings: &mut Vec<StageTiming>, frame_index: usize, stage: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.push(StageTiming {
        frame_index,
        stage: stage.to_string(),
        milliseconds: start.elapsed().as_secs_f64() * 1e3,
    });
    out
}

impl Pipeline {
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        let cordic = config.cordic()?;
        Ok(Self { cordic, extractor: DescriptorExtractor::new(config.descriptor.orientation), config })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn gradients(&self, img: &GrayImage) -> Result<GradientField> {
        compute_gradients(img, &self.cordic)
    }

    pub fn extract(
        &self,
        img: &GrayImage,
        frame_index: usize,
        timings: &mut Vec<StageTiming>,
    ) -> Result<FrameFeatures> {
        let grads = timed(timings, frame_index, "gradients", || self.gradients(img))?;
        let corners = timed(timings, frame_index, "harris", || detect_corners(&grads, &self.config.harris))?;
        let (descriptors, stats) =
            timed(timings, frame_index, "descriptors", || self.extractor.describe_all(&grads, &corners));
        Ok(FrameFeatures { grads, corners, descriptors, stats })
    }

    /// Matches frame `a` against the following frame `b` and estimates the
    /// B→A transform. `pair_index` labels the timings.
    pub fn align_pair(
        &self,
        a: &FrameFeatures,
        b: &FrameFeatures,
        pair_index: usize,
        timings: &mut Vec<StageTiming>,
    ) -> Result<PairOutcome> {
        let regions = match self.config.matcher.region {
            MatchRegion::Half => Some(overlap_regions(a.grads.width() as u32, self.config.stitch.direction)?),
            MatchRegion::Full => None,
        };
        let (matches, transform) = self.match_and_estimate(a, b, regions.as_ref(), pair_index, timings)?;
        let no_consensus = matches!(transform, Err(Error::NoConsensus { .. } | Error::InsufficientMatches(_)));
        if regions.is_none() || !no_consensus || !self.config.matcher.fallback_full {
            return Ok(PairOutcome { matches, transform, fell_back: false });
        }
        let (mut full, transform) = self.match_and_estimate(a, b, None, pair_index, timings)?;
        full.attempted += matches.attempted;
        full.candidate_pairs += matches.candidate_pairs;
        Ok(PairOutcome { matches: full, transform, fell_back: true })
    }

    fn match_and_estimate(
        &self,
        a: &FrameFeatures,
        b: &FrameFeatures,
        regions: Option<&OverlapRegions>,
        pair_index: usize,
        timings: &mut Vec<StageTiming>,
    ) -> Result<(OverlapMatches, Result<FrameTransform>)> {
        let matches = timed(timings, pair_index, "match", || {
            match_with_regions(&a.descriptors, &b.descriptors, regions, self.config.matcher.ratio_max)
        })?;
        let transform = timed(timings, pair_index, "transform", || {
            estimate_transform(
                &matches.matches,
                &a.descriptor_corners(),
                &b.descriptor_corners(),
                &self.config.matcher.ransac(),
            )
        });
        Ok((matches, transform))
    }
}

/// Renders stage timings as `frame_index,stage,milliseconds` CSV.
pub fn timings_csv(timings: &[StageTiming]) -> String {
    let mut s = String::from("frame_index,stage,milliseconds\n");
    for t in timings {
        s.push_str(&format!("{},{},{:.3}\n", t.frame_index, t.stage, t.milliseconds));
    }
    s
}
