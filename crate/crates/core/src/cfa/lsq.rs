//! Per-pixel least-squares RGB recovery from K filled planes.
//!
//! With `A` the K x 3 matrix of plane filters and `b` a pixel's K
//! exposure-compensated plane values, the recovered color is
//! `c = (A^T A)^{-1} A^T b`, clamped to `[0, 1]`.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::tensor::{Dims, Tensor4D};

use super::pattern::{PlaneLayout, Rgb};

const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct LsqColor {
    filters: Vec<Rgb>,
    exposures: Vec<f64>,
    gram_inv: Matrix3<f64>,
    /// Column k of the pseudo-inverse, i.e. `(A^T A)^{-1} a_k`.
    pinv: Vec<Vector3<f64>>,
}

/// Gradients of [`LsqColor::backward`].
#[derive(Clone, Debug)]
pub struct LsqGrads {
    pub filled: Tensor4D,
    pub filters: Vec<Rgb>,
}

impl LsqColor {
    pub fn new(filters: &[Rgb], exposures: &[f64], name: &str) -> Result<Self> {
        if filters.len() != exposures.len() {
            return Err(Error::shape(
                "lsq_color_baseline",
                format!("{} filters", filters.len()),
                format!("{} exposures", exposures.len()),
            ));
        }
        if filters.len() < 3 {
            return Err(Error::DegeneratePattern(name.to_string()));
        }
        let a = DMatrix::from_fn(filters.len(), 3, |r, c| filters[r][c]);
        let sv = a.clone().svd(false, false).singular_values;
        let max = sv.max();
        if !(max > 0.0) || sv.min() <= RANK_TOL * max {
            return Err(Error::DegeneratePattern(name.to_string()));
        }
        let mut gram = Matrix3::zeros();
        for f in filters {
            let v = Vector3::from(*f);
            gram += v * v.transpose();
        }
        let gram_inv = gram
            .try_inverse()
            .ok_or_else(|| Error::DegeneratePattern(name.to_string()))?;
        let pinv = filters
            .iter()
            .map(|f| gram_inv * Vector3::from(*f))
            .collect();
        Ok(LsqColor {
            filters: filters.to_vec(),
            exposures: exposures.to_vec(),
            gram_inv,
            pinv,
        })
    }

    pub fn for_layout(layout: &PlaneLayout, name: &str) -> Result<Self> {
        Self::new(&layout.filters, &layout.exposures, name)
    }

    pub fn planes(&self) -> usize {
        self.filters.len()
    }

    fn check(&self, filled: &Tensor4D) -> Result<()> {
        if filled.dims().c != self.planes() {
            return Err(Error::shape(
                "lsq_color_baseline",
                format!("{} planes", filled.dims().c),
                format!("{} filters", self.planes()),
            ));
        }
        Ok(())
    }

    /// Least-squares color before clamping.
    pub fn solve(&self, filled: &Tensor4D) -> Result<Tensor4D> {
        self.check(filled)?;
        let d = filled.dims();
        let mut out = Tensor4D::zeros(Dims::new(d.n, 3, d.h, d.w));
        let hw = d.plane();
        for n in 0..d.n {
            for k in 0..self.planes() {
                let p = self.pinv[k] / self.exposures[k];
                let src = filled.plane(n, k);
                for c in 0..3 {
                    let coef = p[c];
                    let dst = out.plane_mut(n, c);
                    for i in 0..hw {
                        dst[i] += coef * src[i];
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, filled: &Tensor4D) -> Result<Tensor4D> {
        Ok(self.solve(filled)?.clamp(0.0, 1.0))
    }

    /// Gradients of a loss on the clamped output with respect to the filled
    /// planes and the filter matrix rows.
    pub fn backward(&self, filled: &Tensor4D, grad_rgb: &Tensor4D) -> Result<LsqGrads> {
        let raw = self.solve(filled)?;
        raw.ensure_dims(grad_rgb, "lsq_color_backward")?;
        let d = filled.dims();
        let k_planes = self.planes();
        let mut grad_filled = Tensor4D::zeros(d);
        let mut grad_a = vec![Vector3::zeros(); k_planes];
        let a: Vec<Vector3<f64>> = self.filters.iter().map(|f| Vector3::from(*f)).collect();
        let mut b = vec![0.0; k_planes];
        for n in 0..d.n {
            for y in 0..d.h {
                for x in 0..d.w {
                    let c = Vector3::new(
                        raw.get(n, 0, y, x),
                        raw.get(n, 1, y, x),
                        raw.get(n, 2, y, x),
                    );
                    let mut gc = Vector3::zeros();
                    for ch in 0..3 {
                        if (0.0..=1.0).contains(&c[ch]) {
                            gc[ch] = grad_rgb.get(n, ch, y, x);
                        }
                    }
                    if gc == Vector3::zeros() {
                        continue;
                    }
                    let z = self.gram_inv * gc;
                    for k in 0..k_planes {
                        b[k] = filled.get(n, k, y, x) / self.exposures[k];
                    }
                    for k in 0..k_planes {
                        let az = a[k].dot(&z);
                        let idx = grad_filled.index(n, k, y, x);
                        grad_filled.data_mut()[idx] = az / self.exposures[k];
                        let r = b[k] - a[k].dot(&c);
                        grad_a[k] += z * r - c * az;
                    }
                }
            }
        }
        Ok(LsqGrads {
            filled: grad_filled,
            filters: grad_a.iter().map(|v| [v[0], v[1], v[2]]).collect(),
        })
    }
}

/// Recovers RGB from the filled planes of `layout`.
pub fn lsq_color_baseline(filled: &Tensor4D, layout: &PlaneLayout, name: &str) -> Result<Tensor4D> {
    LsqColor::for_layout(layout, name)?.apply(filled)
}
