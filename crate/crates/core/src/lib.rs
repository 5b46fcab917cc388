//! Real-time style panoramic stitching built on Harris corners and a
//! pyramid-free SIFT-like descriptor.
//!
//! Pipeline per frame: [`gradient`] (Sobel derivatives, CORDIC magnitude and
//! direction) → [`harris`] (response, adaptive threshold, NMS) →
//! [`descriptor`] (folded 3×3 main orientation, 4×4×8 descriptor). Per pair:
//! [`matcher`] (half-overlap ratio + cross-check matching, seeded consensus
//! transform). Frames are accumulated by [`stitcher`]; [`eval`] compares the
//! optimized pipeline against a classic full-frame variant on synthetic pans.

pub mod config;
pub mod cordic;
pub mod descriptor;
pub mod error;
pub mod eval;
pub mod gradient;
pub mod harris;
pub mod image;
pub mod matcher;
pub mod pipeline;
pub mod stitcher;
pub mod synth;

pub use config::Config;
pub use cordic::{build_trig_lut, cordic_vectoring, Cordic, CordicResult, Fixed, TrigLut};
pub use descriptor::{describe_all, Descriptor, DescriptorExtractor, MainOrientation, OrientationMethod};
pub use error::{Error, Result};
pub use gradient::{compute_gradients, GradientField};
pub use harris::{
    adaptive_threshold, corner_response, detect_corners, non_max_suppress, Corner, HarrisParams, ResponseMap,
};
pub use image::{load_image, save_image, to_grayscale, GrayImage};
pub use matcher::{
    estimate_transform, match_descriptors, overlap_regions, FrameTransform, Match, MotionModel, PanDirection,
};
pub use pipeline::{FrameFeatures, Pipeline, StageTiming};
pub use stitcher::{composite, stitch_sequence, Panorama, StitchFailure, StitchOutput};
