//! Color filter arrays: tile definitions, mosaic sampling, and the
//! interpolation baselines used for residual learning.

mod fill;
mod lsq;
mod mosaic;
mod pattern;
mod stack_io;

pub use fill::{bilinear_demosaic_bayer, bilinear_fill, FillOperator};
pub use lsq::{lsq_color_baseline, LsqColor, LsqGrads};
pub use mosaic::{mosaic, mosaic_with, PlaneStack};
pub use pattern::{CfaPattern, PlaneLayout, Rgb, BUILTIN_NAMES};
pub use stack_io::{
    decode_mosaic, encode_mosaic, load_mosaic, mosaic_preview, save_mosaic, MOSAIC_MAGIC,
    MOSAIC_VERSION,
};
