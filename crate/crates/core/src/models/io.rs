//! Weight files.
//!
//! All integers are little-endian `u32` unless noted, all reals
//! little-endian IEEE-754 `f64`:
//!
//! ```text
//! magic        8 bytes  "CFANETW\0"
//! version      u32      1
//! arch         u8       0 dmcnn, 1 dmcnn_vd, 2 dmcnn_vd_pa
//! input_mode   u8       0 sparse, 1 filled
//! baseline     u8       0 none, 1 bilinear rgb, 2 least squares
//! reserved     u8       0
//! in_channels  u32
//! out_channels u32
//! has_pattern  u8
//!   tile_h, tile_w u32; lr_scale f64; tile_h*tile_w*3 weights (row-major cells, RGB)
//! layer_count  u32
//! per layer    tag u8, then
//!   0 conv:      out_c in_c kh kw padding u32; lr_scale f64; kernel (out_c*in_c*kh*kw); bias (out_c)
//!   1 batchnorm: channels u32; epsilon, momentum, lr_scale f64; gamma, beta, running_mean, running_var
//!   2 relu, 3 selu: no payload
//! ```

use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::layers::{BatchNormLayer, ConvLayer};
use crate::tensor::{Dims, Tensor4D};

use super::graph::{Architecture, InputMode, Layer, Model, ResidualBaseline};
use super::pattern_layer::PatternLayer;

pub const WEIGHTS_MAGIC: &[u8; 8] = b"CFANETW\0";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn encode_weights(model: &Model) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(WEIGHTS_MAGIC);
    w.u32(WEIGHTS_VERSION);
    w.u8(match model.arch {
        Architecture::Dmcnn => 0,
        Architecture::DmcnnVd => 1,
        Architecture::DmcnnVdPa => 2,
    });
    w.u8(match model.input_mode {
        InputMode::Sparse => 0,
        InputMode::Filled => 1,
    });
    w.u8(match model.baseline {
        ResidualBaseline::None => 0,
        ResidualBaseline::BilinearRgb => 1,
        ResidualBaseline::LsqPattern => 2,
    });
    w.u8(0);
    w.usize(model.input_channels);
    w.usize(model.output_channels);
    match &model.pattern {
        Some(p) => {
            w.u8(1);
            w.usize(p.tile_h);
            w.usize(p.tile_w);
            w.f64(p.lr_scale);
            w.f64s(&p.weights);
        }
        None => w.u8(0),
    }
    w.usize(model.layers.len());
    for layer in &model.layers {
        match layer {
            Layer::Conv(c) => {
                w.u8(0);
                let d = c.kernel.dims();
                for v in [d.n, d.c, d.h, d.w, c.padding] {
                    w.usize(v);
                }
                w.f64(c.lr_scale);
                w.f64s(c.kernel.data());
                w.f64s(&c.bias);
            }
            Layer::BatchNorm(b) => {
                w.u8(1);
                w.usize(b.channels());
                w.f64(b.epsilon);
                w.f64(b.momentum);
                w.f64(b.lr_scale);
                w.f64s(&b.gamma);
                w.f64s(&b.beta);
                w.f64s(&b.running_mean);
                w.f64s(&b.running_var);
            }
            Layer::Relu => w.u8(2),
            Layer::Selu => w.u8(3),
        }
    }
    w.buf
}

pub fn decode_weights(data: &[u8]) -> Result<Model> {
    let mut r = Reader::new(data, "weight file");
    let magic = r.take(WEIGHTS_MAGIC.len())?;
    if magic != WEIGHTS_MAGIC {
        return Err(Error::Format(format!("bad weight file magic {magic:?}")));
    }
    let version = r.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(Error::Version {
            found: version,
            supported: WEIGHTS_VERSION,
        });
    }
    let arch = match r.u8()? {
        0 => Architecture::Dmcnn,
        1 => Architecture::DmcnnVd,
        2 => Architecture::DmcnnVdPa,
        t => return Err(Error::Format(format!("unknown architecture tag {t}"))),
    };
    let input_mode = match r.u8()? {
        0 => InputMode::Sparse,
        1 => InputMode::Filled,
        t => return Err(Error::Format(format!("unknown input mode tag {t}"))),
    };
    let baseline = match r.u8()? {
        0 => ResidualBaseline::None,
        1 => ResidualBaseline::BilinearRgb,
        2 => ResidualBaseline::LsqPattern,
        t => return Err(Error::Format(format!("unknown baseline tag {t}"))),
    };
    r.u8()?;
    let input_channels = r.usize()?;
    let output_channels = r.usize()?;
    let pattern = match r.u8()? {
        0 => None,
        1 => {
            let th = r.usize()?;
            let tw = r.usize()?;
            let lr = r.f64()?;
            let weights = r.f64s(th * tw * 3)?;
            let mut p = PatternLayer::from_weights(th, tw, weights);
            p.lr_scale = lr;
            Some(p)
        }
        t => return Err(Error::Format(format!("bad pattern flag {t}"))),
    };
    let count = r.usize()?;
    let mut layers = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let layer = match r.u8()? {
            0 => {
                let (oc, ic, kh, kw, pad) =
                    (r.usize()?, r.usize()?, r.usize()?, r.usize()?, r.usize()?);
                let mut c = ConvLayer::new(ic, oc, kh, kw, pad)
                    .map_err(|e| Error::Format(e.to_string()))?;
                c.lr_scale = r.f64()?;
                c.kernel =
                    Tensor4D::from_vec(Dims::new(oc, ic, kh, kw), r.f64s(oc * ic * kh * kw)?)?;
                c.bias = r.f64s(oc)?;
                Layer::Conv(c)
            }
            1 => {
                let ch = r.usize()?;
                let mut b = BatchNormLayer::new(ch);
                b.epsilon = r.f64()?;
                b.momentum = r.f64()?;
                b.lr_scale = r.f64()?;
                b.gamma = r.f64s(ch)?;
                b.beta = r.f64s(ch)?;
                b.running_mean = r.f64s(ch)?;
                b.running_var = r.f64s(ch)?;
                Layer::BatchNorm(b)
            }
            2 => Layer::Relu,
            3 => Layer::Selu,
            t => return Err(Error::Format(format!("unknown layer tag {t}"))),
        };
        layers.push(layer);
    }
    r.finish()?;
    Ok(Model {
        arch,
        input_channels,
        output_channels,
        input_mode,
        baseline,
        pattern,
        layers,
    })
}

pub fn save_weights(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, encode_weights(model)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<Model> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&data)
}

fn describe(layer: &Layer) -> String {
    match layer {
        Layer::Conv(c) => format!("conv {}", c.kernel.dims()),
        Layer::BatchNorm(b) => format!("batchnorm {}", b.channels()),
        Layer::Relu => "relu".into(),
        Layer::Selu => "selu".into(),
    }
}

/// Loads weights into an existing architecture, checking every layer's shape.
pub fn load_weights_into(model: &mut Model, path: &Path) -> Result<()> {
    let loaded = load_weights(path)?;
    check_compatible(model, &loaded)?;
    *model = loaded;
    Ok(())
}

pub fn check_compatible(model: &Model, loaded: &Model) -> Result<()> {
    let pat = |m: &Model| m.pattern.as_ref().map(|p| (p.tile_h, p.tile_w));
    if pat(model) != pat(loaded) {
        return Err(Error::LayerMismatch {
            layer: 0,
            expected: format!("pattern layer {:?}", pat(model)),
            found: format!("pattern layer {:?}", pat(loaded)),
        });
    }
    if model.layers.len() != loaded.layers.len() {
        return Err(Error::LayerMismatch {
            layer: model.layers.len().min(loaded.layers.len()),
            expected: format!("{} layers", model.layers.len()),
            found: format!("{} layers", loaded.layers.len()),
        });
    }
    for (i, (a, b)) in model.layers.iter().zip(&loaded.layers).enumerate() {
        let (da, db) = (describe(a), describe(b));
        if da != db {
            return Err(Error::LayerMismatch {
                layer: i,
                expected: da,
                found: db,
            });
        }
    }
    Ok(())
}
