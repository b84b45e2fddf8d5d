//! Mosaic files: a plane stack together with the pattern that produced it.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic      8 bytes  "CFAMOSC\0"
//! version    u32      1
//! n, planes, height, width   u32 each
//! pattern    u32 byte length, then the pattern in its text format (UTF-8)
//! mask       height*width u32 plane indices, row-major
//! planes     n*planes*height*width f64, NCHW order
//! ```

use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::tensor::{Dims, Tensor4D};

use super::mosaic::PlaneStack;
use super::pattern::CfaPattern;

pub const MOSAIC_MAGIC: &[u8; 8] = b"CFAMOSC\0";
pub const MOSAIC_VERSION: u32 = 1;

pub fn encode_mosaic(stack: &PlaneStack, pattern: &CfaPattern) -> Vec<u8> {
    let d = stack.planes.dims();
    let mut w = Writer::default();
    w.bytes(MOSAIC_MAGIC);
    w.u32(MOSAIC_VERSION);
    for v in [d.n, d.c, d.h, d.w] {
        w.usize(v);
    }
    let text = pattern.to_text();
    w.usize(text.len());
    w.bytes(text.as_bytes());
    for &m in &stack.mask {
        w.usize(m);
    }
    w.f64s(stack.planes.data());
    w.buf
}

pub fn decode_mosaic(data: &[u8]) -> Result<(PlaneStack, CfaPattern)> {
    let mut r = Reader::new(data, "mosaic file");
    if r.take(8)? != MOSAIC_MAGIC {
        return Err(Error::Format("mosaic file: bad magic".into()));
    }
    let version = r.u32()?;
    if version != MOSAIC_VERSION {
        return Err(Error::Version {
            found: version,
            supported: MOSAIC_VERSION,
        });
    }
    let (n, k, h, w) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
    let len = r.usize()?;
    let text = std::str::from_utf8(r.take(len)?)
        .map_err(|_| Error::Format("mosaic file: pattern is not UTF-8".into()))?;
    let pattern = CfaPattern::parse_text(text)?;
    let mask = (0..h * w).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let planes = Tensor4D::from_vec(Dims::new(n, k, h, w), r.f64s(n * k * h * w)?)?;
    r.finish()?;
    let stack = PlaneStack { planes, mask };
    stack.check_layout(&pattern.plane_layout())?;
    Ok((stack, pattern))
}

pub fn save_mosaic(stack: &PlaneStack, pattern: &CfaPattern, path: &Path) -> Result<()> {
    std::fs::write(path, encode_mosaic(stack, pattern)).map_err(|e| Error::io(path, e))
}

pub fn load_mosaic(path: &Path) -> Result<(PlaneStack, CfaPattern)> {
    decode_mosaic(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Each sample painted in its filter's color (divided by the cell exposure),
/// for viewing a mosaic as an ordinary RGB image.
pub fn mosaic_preview(stack: &PlaneStack, pattern: &CfaPattern) -> Tensor4D {
    let layout = pattern.plane_layout();
    let d = stack.planes.dims();
    Tensor4D::from_fn(Dims::new(d.n, 3, d.h, d.w), |n, c, y, x| {
        let k = stack.mask[y * d.w + x];
        let v = stack.planes.get(n, k, y, x) / layout.exposures[k];
        (v * layout.filters[k][c]).clamp(0.0, 1.0)
    })
}
