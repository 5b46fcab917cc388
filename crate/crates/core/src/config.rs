//! Run configuration: a `key = value` file (TOML dotted keys) plus overrides.
//!
//! ```text
//! harris.k = 0.04
//! matcher.seed = 7
//! stitch.direction = "left-to-right"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cordic::Cordic;
use crate::descriptor::{OrientationMethod, FOLDED_BINS, SUBREGIONS, SUBREGION_SIZE};
use crate::error::{Error, Result};
use crate::harris::HarrisParams;
use crate::matcher::{MotionModel, PanDirection, RansacParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescriptorConfig {
    pub orientation_bins_fold: usize,
    pub subregions: usize,
    pub subregion_size: usize,
    pub orientation: OrientationMethod,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            orientation_bins_fold: FOLDED_BINS,
            subregions: SUBREGIONS,
            subregion_size: SUBREGION_SIZE,
            orientation: OrientationMethod::Folded,
        }
    }
}

/// Which part of each frame is searched for correspondences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchRegion {
    #[default]
    Half,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatcherConfig {
    pub ratio_max: f64,
    pub inlier_tol: f64,
    pub ransac_iters: usize,
    pub seed: u64,
    pub model: MotionModel,
    pub region: MatchRegion,
    /// Retry a pair over the full frames when half-region matching finds no consensus.
    pub fallback_full: bool,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        let r = RansacParams::default();
        Self {
            ratio_max: 0.8,
            inlier_tol: r.inlier_tol,
            ransac_iters: r.iterations,
            seed: r.seed,
            model: r.model,
            region: MatchRegion::Half,
            fallback_full: true,
        }
    }
}

impl MatcherConfig {
    pub fn ransac(&self) -> RansacParams {
        RansacParams { iterations: self.ransac_iters, inlier_tol: self.inlier_tol, seed: self.seed, model: self.model }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlendMode {
    #[default]
    Feather,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StitchConfig {
    pub direction: PanDirection,
    pub blend: BlendMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CordicConfig {
    pub iterations: u32,
    pub frac_bits: u32,
}

impl Default for CordicConfig {
    fn default() -> Self {
        let c = Cordic::default();
        Self { iterations: c.iterations(), frac_bits: c.frac_bits() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub harris: HarrisParams,
    pub descriptor: DescriptorConfig,
    pub matcher: MatcherConfig,
    pub stitch: StitchConfig,
    pub cordic: CordicConfig,
}

/// Magnitudes are stored as u32; Sobel magnitudes reach ~1443, so 20 bits is the ceiling.
const MAX_GRADIENT_FRAC_BITS: u32 = 20;

impl Config {
    pub fn from_str_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for (key, value) in overrides {
            set_dotted(&mut table, key, parse_value(value))?;
        }
        let cfg: Config =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_str_with_overrides(text, &[])
    }

    /// Reads `path` if given, applies `overrides` (`key`, `value` pairs), validates.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::FileNotFound(p.to_path_buf()),
                _ => e.into(),
            })?,
            None => String::new(),
        };
        Self::from_str_with_overrides(&text, overrides)
    }

    pub fn cordic(&self) -> Result<Cordic> {
        Cordic::new(self.cordic.iterations, self.cordic.frac_bits)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.harris.validate().map_err(|e| Error::Config(e.to_string()))?;
        let d = &self.descriptor;
        if d.orientation_bins_fold != FOLDED_BINS || d.subregions != SUBREGIONS || d.subregion_size != SUBREGION_SIZE {
            return bad(format!(
                "descriptor geometry is fixed at {FOLDED_BINS} folded bins, {SUBREGIONS}x{SUBREGIONS} sub-regions of {SUBREGION_SIZE}x{SUBREGION_SIZE}"
            ));
        }
        let m = &self.matcher;
        if !(m.ratio_max > 0.0 && m.ratio_max < 1.0) {
            return bad(format!("matcher.ratio_max {} outside (0, 1)", m.ratio_max));
        }
        if !(m.inlier_tol > 0.0 && m.inlier_tol.is_finite()) {
            return bad(format!("matcher.inlier_tol {} must be positive", m.inlier_tol));
        }
        if m.ransac_iters == 0 {
            return bad("matcher.ransac_iters must be >= 1".into());
        }
        self.cordic().map_err(|e| Error::Config(e.to_string()))?;
        if self.cordic.frac_bits > MAX_GRADIENT_FRAC_BITS {
            return bad(format!("cordic.frac_bits {} > {MAX_GRADIENT_FRAC_BITS}", self.cordic.frac_bits));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }
}

fn parse_value(raw: &str) -> toml::Value {
    // Accept bare words ("similarity") as strings; anything TOML-parsable keeps its type.
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts = key.split('.').collect::<Vec<_>>();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("bad key '{key}'")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Config(format!("'{p}' is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
