//! Seeded weight initializers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::conv::ConvLayer;

/// How the MSRA `factor` is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MsraScale {
    /// stddev = factor * sqrt(2 / fan_in)
    #[default]
    Multiplier,
    /// stddev = factor
    Absolute,
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Kernel ~ N(0, stddev^2), bias = 0.
pub fn init_gaussian(layer: &mut ConvLayer, stddev: f64, seed: u64) {
    let mut rng = seeded_rng(seed);
    fill_normal(layer, stddev, &mut rng);
}

/// Kernel ~ N(0, (factor * sqrt(2 / fan_in))^2) with fan_in = in_c * kh * kw, bias = 0.
pub fn init_msra(layer: &mut ConvLayer, factor: f64, seed: u64) {
    init_msra_with(layer, factor, MsraScale::Multiplier, seed);
}

pub fn init_msra_with(layer: &mut ConvLayer, factor: f64, scale: MsraScale, seed: u64) {
    let stddev = match scale {
        MsraScale::Multiplier => factor * msra_stddev(layer),
        MsraScale::Absolute => factor,
    };
    let mut rng = seeded_rng(seed);
    fill_normal(layer, stddev, &mut rng);
}

pub fn msra_stddev(layer: &ConvLayer) -> f64 {
    let d = layer.kernel.dims();
    (2.0 / (d.c * d.h * d.w) as f64).sqrt()
}

fn fill_normal(layer: &mut ConvLayer, stddev: f64, rng: &mut ChaCha8Rng) {
    layer.bias.fill(0.0);
    if stddev == 0.0 {
        layer.kernel.data_mut().fill(0.0);
        return;
    }
    let normal = Normal::new(0.0, stddev.abs()).expect("finite stddev");
    for w in layer.kernel.data_mut() {
        *w = normal.sample(rng);
    }
}
