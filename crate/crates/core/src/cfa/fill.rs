//! Per-plane bilinear interpolation over arbitrary periodic sampling lattices.
//!
//! Each missing value is a normalized tent-weighted average of the plane's
//! samples within one tile period in each direction. The tent weight of an
//! offset `(dy, dx)` is `(tile_h - |dy|) * (tile_w - |dx|)`; on the Bayer
//! lattice this is the textbook bilinear kernel. Near the border only the
//! samples inside the image contribute. Sampled sites keep their values.

use crate::error::{Error, Result};
use crate::tensor::{Dims, Tensor4D};

use super::mosaic::PlaneStack;
use super::pattern::CfaPattern;

/// Linear interpolation operator for one sample mask.
#[derive(Clone, Debug)]
pub struct FillOperator {
    h: usize,
    w: usize,
    planes: usize,
    /// For every (plane, pixel) pair that is not sampled: the source pixels
    /// and their normalized weights. Stored as CSR over `plane * h * w + pixel`.
    offsets: Vec<usize>,
    sources: Vec<(u32, f64)>,
    mask: Vec<usize>,
}

impl FillOperator {
    pub fn new(
        mask: &[usize],
        h: usize,
        w: usize,
        planes: usize,
        tile_h: usize,
        tile_w: usize,
    ) -> Result<Self> {
        if mask.len() != h * w {
            return Err(Error::shape(
                "bilinear_fill",
                format!("mask of {}", mask.len()),
                format!("{h}x{w}"),
            ));
        }
        for k in 0..planes {
            if !mask.contains(&k) {
                return Err(Error::EmptyPlane {
                    plane: k,
                    height: h,
                    width: w,
                });
            }
        }
        let (rh, rw) = (tile_h as isize - 1, tile_w as isize - 1);
        let mut offsets = Vec::with_capacity(planes * h * w + 1);
        let mut sources = Vec::new();
        offsets.push(0);
        for k in 0..planes {
            for y in 0..h {
                for x in 0..w {
                    if mask[y * w + x] != k {
                        let start = sources.len();
                        let mut total = 0.0;
                        for dy in -rh..=rh {
                            let sy = y as isize + dy;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for dx in -rw..=rw {
                                let sx = x as isize + dx;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                let src = sy as usize * w + sx as usize;
                                if mask[src] == k {
                                    let wt = ((tile_h as isize - dy.abs())
                                        * (tile_w as isize - dx.abs()))
                                        as f64;
                                    total += wt;
                                    sources.push((src as u32, wt));
                                }
                            }
                        }
                        if total == 0.0 {
                            return Err(Error::EmptyPlane {
                                plane: k,
                                height: h,
                                width: w,
                            });
                        }
                        for s in &mut sources[start..] {
                            s.1 /= total;
                        }
                    }
                    offsets.push(sources.len());
                }
            }
        }
        Ok(FillOperator {
            h,
            w,
            planes,
            offsets,
            sources,
            mask: mask.to_vec(),
        })
    }

    pub fn for_stack(stack: &PlaneStack, tile_h: usize, tile_w: usize) -> Result<Self> {
        Self::new(
            &stack.mask,
            stack.height(),
            stack.width(),
            stack.planes_count(),
            tile_h,
            tile_w,
        )
    }

    fn check(&self, t: &Tensor4D, op: &'static str) -> Result<()> {
        let d = t.dims();
        if (d.c, d.h, d.w) != (self.planes, self.h, self.w) {
            return Err(Error::shape(
                op,
                format!("tensor {d}"),
                format!("{} planes of {}x{}", self.planes, self.h, self.w),
            ));
        }
        Ok(())
    }

    /// Dense planes from sparse ones. Values at unsampled sites are ignored.
    pub fn apply(&self, sparse: &Tensor4D) -> Result<Tensor4D> {
        self.check(sparse, "bilinear_fill")?;
        let d = sparse.dims();
        let hw = self.h * self.w;
        let mut out = Tensor4D::zeros(d);
        for n in 0..d.n {
            for k in 0..self.planes {
                let src = sparse.plane(n, k);
                let dst = out.plane_mut(n, k);
                for p in 0..hw {
                    if self.mask[p] == k {
                        dst[p] = src[p];
                    } else {
                        let row = k * hw + p;
                        let taps = &self.sources[self.offsets[row]..self.offsets[row + 1]];
                        // Anchored on the first tap so that constant planes
                        // come back bit-exact.
                        let anchor = src[taps[0].0 as usize];
                        dst[p] = anchor
                            + taps
                                .iter()
                                .map(|&(s, wt)| wt * (src[s as usize] - anchor))
                                .sum::<f64>();
                    }
                }
            }
        }
        Ok(out)
    }

    /// Transpose of [`apply`](Self::apply): maps a gradient on the dense
    /// planes to a gradient on the sampled values (zero at unsampled sites).
    pub fn apply_transpose(&self, grad_dense: &Tensor4D) -> Result<Tensor4D> {
        self.check(grad_dense, "bilinear_fill_backward")?;
        let d = grad_dense.dims();
        let hw = self.h * self.w;
        let mut out = Tensor4D::zeros(d);
        for n in 0..d.n {
            for k in 0..self.planes {
                let g = grad_dense.plane(n, k);
                let dst = out.plane_mut(n, k);
                for p in 0..hw {
                    if self.mask[p] == k {
                        dst[p] += g[p];
                    } else {
                        let row = k * hw + p;
                        for &(s, wt) in &self.sources[self.offsets[row]..self.offsets[row + 1]] {
                            dst[s as usize] += wt * g[p];
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn dims(&self, n: usize) -> Dims {
        Dims::new(n, self.planes, self.h, self.w)
    }
}

/// Interpolates every plane of `stack` independently.
pub fn bilinear_fill(stack: &PlaneStack, pattern: &CfaPattern) -> Result<Tensor4D> {
    FillOperator::for_stack(stack, pattern.tile_h, pattern.tile_w)?.apply(&stack.planes)
}

/// Bilinear demosaicing of a Bayer stack: filled planes are R, G, B.
pub fn bilinear_demosaic_bayer(stack: &PlaneStack) -> Result<Tensor4D> {
    let bayer = CfaPattern::bayer()?;
    let layout = bayer.plane_layout();
    if stack.check_layout(&layout).is_err() {
        return Err(Error::InvalidPattern(
            "bilinear_demosaic_bayer needs a Bayer [G R; B G] stack".into(),
        ));
    }
    bilinear_fill(stack, &bayer)
}
