//! Spatially varying exposure and color (SVEC) sampling for single-shot HDR.

use crate::cfa::{mosaic_with, CfaPattern, PlaneStack};
use crate::error::{Error, Result};
use crate::tensor::{Dims, Tensor4D};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvecConfig {
    pub r_max: f64,
    pub r_min: f64,
    /// High exposure divided by low exposure.
    pub exposure_ratio: f64,
    pub bits: u32,
}

impl Default for SvecConfig {
    fn default() -> Self {
        SvecConfig {
            r_max: 4096.0,
            r_min: 1.0 / 64.0,
            exposure_ratio: 64.0,
            bits: 12,
        }
    }
}

impl SvecConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0 && self.r_max > self.r_min && self.r_max.is_finite()) {
            return Err(Error::Config(format!(
                "need r_max > r_min > 0, got r_max={} r_min={}",
                self.r_max, self.r_min
            )));
        }
        if !(self.exposure_ratio > 1.0 && self.exposure_ratio.is_finite()) {
            return Err(Error::Config(format!(
                "exposure ratio must exceed 1, got {}",
                self.exposure_ratio
            )));
        }
        if self.bits == 0 || self.bits > 32 {
            return Err(Error::Config(format!(
                "bits must be in 1..=32, got {}",
                self.bits
            )));
        }
        Ok(())
    }

    /// Largest code the sensor can record, `2^bits - 1`.
    pub fn ceiling(&self) -> f64 {
        (2f64).powi(self.bits as i32) - 1.0
    }

    /// Raw sample for normalized radiance `v` under exposure `e`:
    /// `floor(min(e * v, r_max))`.
    pub fn sample(&self, v: f64, exposure: f64) -> f64 {
        (exposure * v).min(self.r_max).floor()
    }

    /// Sensor code for a raw sample.
    pub fn quantize(&self, sample: f64) -> f64 {
        sample.clamp(0.0, self.ceiling())
    }
}

/// Linear radiance, `1 x 3 x H x W`, nonnegative and finite.
#[derive(Clone, Debug, PartialEq)]
pub struct RadianceImage {
    pixels: Tensor4D,
}

impl RadianceImage {
    pub fn new(pixels: Tensor4D) -> Result<Self> {
        let d = pixels.dims();
        if d.n != 1 || d.c != 3 {
            return Err(Error::shape("RadianceImage", d, "1x3xHxW"));
        }
        if let Some(v) = pixels
            .data()
            .iter()
            .find(|v| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::NonFinite(format!(
                "radiance must be finite and nonnegative, found {v}"
            )));
        }
        Ok(RadianceImage { pixels })
    }

    pub fn pixels(&self) -> &Tensor4D {
        &self.pixels
    }

    pub fn into_tensor(self) -> Tensor4D {
        self.pixels
    }

    pub fn range(&self) -> (f64, f64) {
        self.pixels
            .data()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Maps radiance to integer levels in `[0, r_max]`:
/// `floor(min((r_max - r_min) / (I_max - I_min) * (I - I_min), r_max))`.
pub fn normalize_radiance(img: &RadianceImage, cfg: &SvecConfig) -> Result<Tensor4D> {
    cfg.validate()?;
    let (lo, hi) = img.range();
    if !(hi > lo) {
        return Err(Error::DegenerateRange(lo));
    }
    let scale = (cfg.r_max - cfg.r_min) / (hi - lo);
    Ok(img
        .pixels
        .map(|v| (scale * (v - lo)).min(cfg.r_max).floor()))
}

/// 4x4 tile: Bayer `[G R; B G]` colors with 2x2 exposure blocks in a
/// checkerboard, low exposure on the diagonal blocks.
pub fn svec_pattern(cfg: &SvecConfig) -> CfaPattern {
    const BAYER: [[f64; 3]; 4] = [
        [0.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0],
    ];
    let mut filters = Vec::with_capacity(16);
    let mut exposures = Vec::with_capacity(16);
    for y in 0..4 {
        for x in 0..4 {
            filters.push(BAYER[(y % 2) * 2 + x % 2]);
            exposures.push(if y / 2 == x / 2 {
                1.0
            } else {
                cfg.exposure_ratio
            });
        }
    }
    CfaPattern::new("svec", 4, 4, filters, Some(exposures)).expect("valid svec tile")
}

/// Samples normalized radiance (levels in `[0, r_max]`) through the SVEC
/// pattern. Plane values are sensor codes divided by `r_max`.
pub fn svec_mosaic(normalized: &Tensor4D, cfg: &SvecConfig) -> Result<PlaneStack> {
    cfg.validate()?;
    let layout = svec_pattern(cfg).plane_layout();
    mosaic_with(normalized, &layout, |exposed| {
        cfg.quantize(exposed.min(cfg.r_max).floor()) / cfg.r_max
    })
}

/// Normalized radiance levels to network units in `[0, 1]`.
pub fn to_unit(normalized: &Tensor4D, cfg: &SvecConfig) -> Tensor4D {
    normalized.map(|v| v / cfg.r_max)
}

pub fn from_unit(unit: &Tensor4D, cfg: &SvecConfig) -> Tensor4D {
    unit.map(|v| v * cfg.r_max)
}

/// Divides each sample by its cell's exposure, giving a per-pixel estimate of
/// the normalized radiance level of the sampled channel (`n x 1 x h x w`).
pub fn exposure_compensate(stack: &PlaneStack, cfg: &SvecConfig) -> Result<Tensor4D> {
    let layout = svec_pattern(cfg).plane_layout();
    stack.check_layout(&layout)?;
    let d = stack.planes.dims();
    Ok(Tensor4D::from_fn(
        Dims::new(d.n, 1, d.h, d.w),
        |n, _, y, x| {
            let k = stack.mask[y * d.w + x];
            stack.planes.get(n, k, y, x) * cfg.r_max / layout.exposures[k]
        },
    ))
}
