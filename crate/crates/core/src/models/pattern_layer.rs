//! Trainable CFA: one RGB filter per tile cell, kept inside `[0, 1]`.

use rand::Rng;

use crate::cfa::{CfaPattern, PlaneStack};
use crate::error::{Error, Result};
use crate::layers::init::seeded_rng;
use crate::tensor::{Dims, Tensor4D};

#[derive(Clone, Debug, PartialEq)]
pub struct PatternLayer {
    pub tile_h: usize,
    pub tile_w: usize,
    /// Row-major cells, 3 weights each.
    pub weights: Vec<f64>,
    pub grad: Vec<f64>,
    pub lr_scale: f64,
}

impl PatternLayer {
    /// Weights drawn uniformly from `[0, 1]`.
    pub fn random(tile_h: usize, tile_w: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let weights = (0..tile_h * tile_w * 3)
            .map(|_| rng.random::<f64>())
            .collect();
        Self::from_weights(tile_h, tile_w, weights)
    }

    pub fn from_weights(tile_h: usize, tile_w: usize, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), tile_h * tile_w * 3);
        PatternLayer {
            tile_h,
            tile_w,
            grad: vec![0.0; weights.len()],
            weights,
            lr_scale: 1.0,
        }
    }

    pub fn from_pattern(pattern: &CfaPattern) -> Self {
        let weights = pattern.filters.iter().flatten().copied().collect();
        Self::from_weights(pattern.tile_h, pattern.tile_w, weights)
    }

    pub fn cells(&self) -> usize {
        self.tile_h * self.tile_w
    }

    pub fn cell(&self, i: usize) -> [f64; 3] {
        [
            self.weights[3 * i],
            self.weights[3 * i + 1],
            self.weights[3 * i + 2],
        ]
    }

    /// The current weights as a pattern (unit exposures).
    pub fn to_pattern(&self, name: &str) -> Result<CfaPattern> {
        CfaPattern::new(
            name,
            self.tile_h,
            self.tile_w,
            (0..self.cells()).map(|i| self.cell(i)).collect(),
            None,
        )
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Samples an RGB image with one plane per tile cell.
pub fn pattern_forward(image: &Tensor4D, layer: &PatternLayer) -> Result<PlaneStack> {
    let d = image.dims();
    if d.c != 3 {
        return Err(Error::shape(
            "pattern_forward",
            format!("image {d}"),
            "3 channels",
        ));
    }
    let k = layer.cells();
    let mut planes = Tensor4D::zeros(Dims::new(d.n, k, d.h, d.w));
    let mut mask = Vec::with_capacity(d.plane());
    for y in 0..d.h {
        for x in 0..d.w {
            mask.push((y % layer.tile_h) * layer.tile_w + x % layer.tile_w);
        }
    }
    for n in 0..d.n {
        for y in 0..d.h {
            for x in 0..d.w {
                let cell = mask[y * d.w + x];
                let f = layer.cell(cell);
                let v = f[0] * image.get(n, 0, y, x)
                    + f[1] * image.get(n, 1, y, x)
                    + f[2] * image.get(n, 2, y, x);
                planes.set(n, cell, y, x, v);
            }
        }
    }
    Ok(PlaneStack { planes, mask })
}

/// Gradient of the loss with respect to the cell weights, given the gradient
/// on the pattern layer's output planes.
pub fn pattern_backward(
    image: &Tensor4D,
    layer: &PatternLayer,
    grad_out: &Tensor4D,
) -> Result<Vec<f64>> {
    let d = image.dims();
    let expect = Dims::new(d.n, layer.cells(), d.h, d.w);
    if grad_out.dims() != expect || d.c != 3 {
        return Err(Error::shape(
            "pattern_backward",
            format!("grad {}", grad_out.dims()),
            format!("expected {expect}"),
        ));
    }
    let mut grad = vec![0.0; layer.weights.len()];
    for n in 0..d.n {
        for y in 0..d.h {
            for x in 0..d.w {
                let cell = (y % layer.tile_h) * layer.tile_w + x % layer.tile_w;
                let g = grad_out.get(n, cell, y, x);
                for c in 0..3 {
                    grad[3 * cell + c] += image.get(n, c, y, x) * g;
                }
            }
        }
    }
    Ok(grad)
}

/// Projects every weight onto `[0, 1]`.
pub fn project_pattern_weights(layer: &mut PatternLayer) {
    for w in &mut layer.weights {
        *w = if *w < 0.0 {
            0.0
        } else if *w > 1.0 {
            1.0
        } else {
            *w
        };
    }
}
