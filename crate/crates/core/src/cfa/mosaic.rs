use crate::error::{Error, Result};
use crate::tensor::{Dims, Tensor4D};

use super::pattern::{CfaPattern, PlaneLayout};

/// Sparse mosaic: one plane per distinct filter, with exactly one plane
/// sampled at each pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneStack {
    /// `n x K x h x w`; zero wherever the plane is not sampled.
    pub planes: Tensor4D,
    /// Plane index sampled at each pixel, row-major `h x w`; shared by all samples.
    pub mask: Vec<usize>,
}

impl PlaneStack {
    pub fn planes_count(&self) -> usize {
        self.planes.dims().c
    }

    pub fn height(&self) -> usize {
        self.planes.dims().h
    }

    pub fn width(&self) -> usize {
        self.planes.dims().w
    }

    /// The sampled value at every pixel as an `n x 1 x h x w` tensor.
    pub fn samples(&self) -> Tensor4D {
        let d = self.planes.dims();
        let w = d.w;
        Tensor4D::from_fn(Dims::new(d.n, 1, d.h, d.w), |n, _, y, x| {
            self.planes.get(n, self.mask[y * w + x], y, x)
        })
    }

    pub fn mask_for(layout: &PlaneLayout, h: usize, w: usize) -> Vec<usize> {
        (0..h)
            .flat_map(|y| (0..w).map(move |x| (y, x)))
            .map(|(y, x)| layout.plane_at(y, x))
            .collect()
    }

    /// Checks the stack against a layout: plane count, mask, and sparsity.
    pub fn check_layout(&self, layout: &PlaneLayout) -> Result<()> {
        if self.planes_count() != layout.planes() {
            return Err(Error::shape(
                "plane stack",
                format!("{} planes", self.planes_count()),
                format!("pattern with {} planes", layout.planes()),
            ));
        }
        if self.mask != Self::mask_for(layout, self.height(), self.width()) {
            return Err(Error::shape(
                "plane stack",
                "sample mask",
                "pattern geometry",
            ));
        }
        Ok(())
    }
}

/// Samples an RGB image through the pattern's merged plane layout.
pub fn mosaic(image: &Tensor4D, pattern: &CfaPattern) -> Result<PlaneStack> {
    mosaic_with(image, &pattern.plane_layout(), |v| v)
}

/// Samples `image` through `layout`; `response` maps the exposed value
/// (filter response times exposure) to the recorded sample.
pub fn mosaic_with(
    image: &Tensor4D,
    layout: &PlaneLayout,
    response: impl Fn(f64) -> f64,
) -> Result<PlaneStack> {
    let d = image.dims();
    if d.c != 3 {
        return Err(Error::shape("mosaic", format!("image {d}"), "3 channels"));
    }
    let k = layout.planes();
    let mask = PlaneStack::mask_for(layout, d.h, d.w);
    let mut planes = Tensor4D::zeros(Dims::new(d.n, k, d.h, d.w));
    for n in 0..d.n {
        for y in 0..d.h {
            for x in 0..d.w {
                let p = mask[y * d.w + x];
                let f = layout.filters[p];
                let v = f[0] * image.get(n, 0, y, x)
                    + f[1] * image.get(n, 1, y, x)
                    + f[2] * image.get(n, 2, y, x);
                planes.set(n, p, y, x, response(v * layout.exposures[p]));
            }
        }
    }
    Ok(PlaneStack { planes, mask })
}
