//! Constructors for the demosaicing networks.

use crate::cfa::CfaPattern;
use crate::error::{Error, Result};
use crate::layers::{init_gaussian, init_msra_with, BatchNormLayer, ConvLayer, MsraScale};

use super::graph::{Architecture, InputMode, Layer, Model, ResidualBaseline};
use super::pattern_layer::PatternLayer;

/// Default Gaussian stddev for DMCNN kernels.
pub const DMCNN_INIT_STDDEV: f64 = 0.001;
/// Default MSRA factor for the very deep models.
pub const VD_MSRA_FACTOR: f64 = 0.001;

/// Per-layer seed derived from the model seed.
pub(crate) fn layer_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn build_dmcnn(seed: u64) -> Result<Model> {
    build_dmcnn_with(3, DMCNN_INIT_STDDEV, seed)
}

/// Three valid convolutions: 9x9 feature extraction (128), 1x1 mapping (64),
/// 5x5 reconstruction (3). The network sees the sparse plane stack.
pub fn build_dmcnn_with(input_channels: usize, stddev: f64, seed: u64) -> Result<Model> {
    let specs = [
        (input_channels, 128, 9, 1.0),
        (128, 64, 1, 1.0),
        (64, 3, 5, 0.1),
    ];
    let mut layers = Vec::new();
    for (i, &(cin, cout, k, lr)) in specs.iter().enumerate() {
        let mut conv = ConvLayer::new(cin, cout, k, k, 0)?;
        conv.lr_scale = lr;
        init_gaussian(&mut conv, stddev, layer_seed(seed, i));
        layers.push(Layer::Conv(conv));
        if i < 2 {
            layers.push(Layer::Relu);
        }
    }
    Ok(Model {
        arch: Architecture::Dmcnn,
        input_channels,
        output_channels: 3,
        input_mode: InputMode::Sparse,
        baseline: ResidualBaseline::None,
        pattern: None,
        layers,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct VdConfig {
    /// Number of convolution layers.
    pub depth: usize,
    pub width: usize,
    pub kernel: usize,
    pub input_channels: usize,
    pub baseline: ResidualBaseline,
    pub input_mode: InputMode,
    pub msra_factor: f64,
    pub msra_scale: MsraScale,
}

impl Default for VdConfig {
    fn default() -> Self {
        VdConfig {
            depth: 20,
            width: 64,
            kernel: 3,
            input_channels: 3,
            baseline: ResidualBaseline::BilinearRgb,
            input_mode: InputMode::Filled,
            msra_factor: VD_MSRA_FACTOR,
            msra_scale: MsraScale::Multiplier,
        }
    }
}

impl VdConfig {
    /// Input channels and baseline suited to a fixed pattern: the bilinear
    /// RGB baseline for an R, G, B plane layout, least squares otherwise.
    pub fn for_pattern(pattern: &CfaPattern) -> Self {
        let layout = pattern.plane_layout();
        let rgb = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let is_rgb = layout.filters == rgb && layout.exposures.iter().all(|&e| e == 1.0);
        VdConfig {
            input_channels: layout.planes(),
            baseline: if is_rgb {
                ResidualBaseline::BilinearRgb
            } else {
                ResidualBaseline::LsqPattern
            },
            ..VdConfig::default()
        }
    }
}

fn vd_layers(cfg: &VdConfig, seed: u64) -> Result<Vec<Layer>> {
    if cfg.depth < 2 {
        return Err(Error::Config(format!(
            "depth must be at least 2, got {}",
            cfg.depth
        )));
    }
    if cfg.kernel % 2 == 0 {
        return Err(Error::Config(format!(
            "kernel size must be odd for same-size padding, got {}",
            cfg.kernel
        )));
    }
    let pad = (cfg.kernel - 1) / 2;
    let mut layers = Vec::with_capacity(3 * cfg.depth);
    for i in 0..cfg.depth {
        let cin = if i == 0 {
            cfg.input_channels
        } else {
            cfg.width
        };
        let last = i + 1 == cfg.depth;
        let cout = if last { 3 } else { cfg.width };
        let mut conv = ConvLayer::new(cin, cout, cfg.kernel, cfg.kernel, pad)?;
        init_msra_with(
            &mut conv,
            cfg.msra_factor,
            cfg.msra_scale,
            layer_seed(seed, i),
        );
        layers.push(Layer::Conv(conv));
        if !last {
            layers.push(Layer::BatchNorm(BatchNormLayer::new(cout)));
            layers.push(Layer::Selu);
        }
    }
    Ok(layers)
}

/// `depth - 1` blocks of conv + batch norm + SELU, then a plain conv to RGB,
/// added to a residual baseline.
pub fn build_dmcnn_vd(cfg: &VdConfig, seed: u64) -> Result<Model> {
    if cfg.baseline == ResidualBaseline::BilinearRgb && cfg.input_channels != 3 {
        return Err(Error::Config(format!(
            "bilinear RGB baseline needs 3 input planes, got {}",
            cfg.input_channels
        )));
    }
    Ok(Model {
        arch: Architecture::DmcnnVd,
        input_channels: cfg.input_channels,
        output_channels: 3,
        input_mode: cfg.input_mode,
        baseline: cfg.baseline,
        pattern: None,
        layers: vd_layers(cfg, seed)?,
    })
}

/// A learnable `tile_h x tile_w` pattern layer feeding a DMCNN-VD body with
/// one input plane per cell and a least-squares residual baseline.
pub fn build_dmcnn_vd_pa(tile: (usize, usize), body: &VdConfig, seed: u64) -> Result<Model> {
    let (th, tw) = tile;
    if th == 0 || tw == 0 || th * tw < 3 {
        return Err(Error::Config(format!(
            "pattern tile {th}x{tw} needs at least 3 cells"
        )));
    }
    let cfg = VdConfig {
        input_channels: th * tw,
        baseline: ResidualBaseline::LsqPattern,
        ..body.clone()
    };
    Ok(Model {
        arch: Architecture::DmcnnVdPa,
        input_channels: th * tw,
        output_channels: 3,
        input_mode: cfg.input_mode,
        baseline: ResidualBaseline::LsqPattern,
        pattern: Some(PatternLayer::random(
            th,
            tw,
            layer_seed(seed, usize::MAX - 1),
        )),
        layers: vd_layers(&cfg, seed)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SvecArch {
    Dmcnn,
    DmcnnVd,
}

/// Six-plane SVEC input, three-channel radiance output.
pub fn build_svec_model(arch: SvecArch, body: &VdConfig, seed: u64) -> Result<Model> {
    match arch {
        SvecArch::Dmcnn => build_dmcnn_with(6, DMCNN_INIT_STDDEV, seed),
        SvecArch::DmcnnVd => build_dmcnn_vd(
            &VdConfig {
                input_channels: 6,
                baseline: ResidualBaseline::LsqPattern,
                ..body.clone()
            },
            seed,
        ),
    }
}
