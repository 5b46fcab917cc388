//! Shared fixtures for the criterion benches.

use pano_core::synth::textured_image;
use pano_core::GrayImage;

/// A 640×480 textured frame and its 48-px panned successor.
pub fn frame_pair(seed: u64) -> (GrayImage, GrayImage) {
    let master = textured_image(640 + 48, 480, seed);
    (master.crop(0, 0, 640, 480).unwrap(), master.crop(48, 0, 640, 480).unwrap())
}
