use crate::tensor::{Dims, Tensor4D};

/// Lossless rotations and flips.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AugmentOp {
    Identity,
    /// Counter-clockwise quarter turn.
    Rot90,
    Rot180,
    Rot270,
    /// Mirror left-right.
    FlipH,
    /// Mirror top-bottom.
    FlipV,
}

impl AugmentOp {
    pub const ALL: [AugmentOp; 6] = [
        AugmentOp::Identity,
        AugmentOp::Rot90,
        AugmentOp::Rot180,
        AugmentOp::Rot270,
        AugmentOp::FlipH,
        AugmentOp::FlipV,
    ];

    pub fn inverse(self) -> AugmentOp {
        match self {
            AugmentOp::Rot90 => AugmentOp::Rot270,
            AugmentOp::Rot270 => AugmentOp::Rot90,
            other => other,
        }
    }

    pub fn swaps_axes(self) -> bool {
        matches!(self, AugmentOp::Rot90 | AugmentOp::Rot270)
    }
}

pub fn augment(image: &Tensor4D, op: AugmentOp) -> Tensor4D {
    let d = image.dims();
    let (h, w) = (d.h, d.w);
    let out_dims = if op.swaps_axes() {
        Dims::new(d.n, d.c, w, h)
    } else {
        d
    };
    Tensor4D::from_fn(out_dims, |n, c, y, x| {
        let (sy, sx) = match op {
            AugmentOp::Identity => (y, x),
            AugmentOp::Rot90 => (x, w - 1 - y),
            AugmentOp::Rot180 => (h - 1 - y, w - 1 - x),
            AugmentOp::Rot270 => (h - 1 - x, y),
            AugmentOp::FlipH => (y, w - 1 - x),
            AugmentOp::FlipV => (h - 1 - y, x),
        };
        image.get(n, c, sy, sx)
    })
}
