//! Dense four-dimensional tensors in N x C x H x W layout.

use std::fmt;

use crate::error::{Error, Result};

/// Shape of a [`Tensor4D`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Dims { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn sample(&self) -> usize {
        self.c * self.h * self.w
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Row-major N x C x H x W array of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4D {
    dims: Dims,
    data: Vec<f64>,
}

impl Tensor4D {
    pub fn zeros(dims: Dims) -> Self {
        Tensor4D {
            dims,
            data: vec![0.0; dims.len()],
        }
    }

    pub fn filled(dims: Dims, value: f64) -> Self {
        Tensor4D {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::shape(
                "Tensor4D::from_vec",
                dims,
                format!("{} elements", data.len()),
            ));
        }
        Ok(Tensor4D { dims, data })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..dims.n {
            for c in 0..dims.c {
                for y in 0..dims.h {
                    for x in 0..dims.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Tensor4D { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        debug_assert!(n < self.dims.n && c < self.dims.c && y < self.dims.h && x < self.dims.w);
        ((n * self.dims.c + c) * self.dims.h + y) * self.dims.w + x
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    /// The C x H x W block of sample `n`.
    pub fn sample(&self, n: usize) -> &[f64] {
        let s = self.dims.sample();
        &self.data[n * s..(n + 1) * s]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f64] {
        let s = self.dims.sample();
        &mut self.data[n * s..(n + 1) * s]
    }

    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let p = self.dims.plane();
        let start = (n * self.dims.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let p = self.dims.plane();
        let start = (n * self.dims.c + c) * p;
        &mut self.data[start..start + p]
    }

    pub fn ensure_dims(&self, other: &Tensor4D, op: &'static str) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(op, self.dims, other.dims));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor4D {
        Tensor4D {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Tensor4D) -> Result<Tensor4D> {
        self.ensure_dims(other, "add")?;
        Ok(Tensor4D {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor4D {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Copies the window `[y0, y0+h) x [x0, x0+w)` of every plane.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Tensor4D> {
        if y0 + h > self.dims.h || x0 + w > self.dims.w {
            return Err(Error::shape(
                "crop",
                self.dims,
                format!("window {h}x{w} at ({y0},{x0})"),
            ));
        }
        let dims = Dims::new(self.dims.n, self.dims.c, h, w);
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..self.dims.n {
            for c in 0..self.dims.c {
                let plane = self.plane(n, c);
                for y in y0..y0 + h {
                    data.extend_from_slice(&plane[y * self.dims.w + x0..y * self.dims.w + x0 + w]);
                }
            }
        }
        Ok(Tensor4D { dims, data })
    }

    /// Center crop to `h x w`.
    pub fn center_crop(&self, h: usize, w: usize) -> Result<Tensor4D> {
        if h > self.dims.h || w > self.dims.w {
            return Err(Error::shape("center_crop", self.dims, format!("{h}x{w}")));
        }
        self.crop((self.dims.h - h) / 2, (self.dims.w - w) / 2, h, w)
    }

    /// Stacks single-sample tensors of identical C x H x W along N.
    pub fn stack(items: &[Tensor4D]) -> Result<Tensor4D> {
        let first = items
            .first()
            .ok_or_else(|| Error::shape("stack", "0 tensors", "at least 1"))?;
        let d = first.dims;
        let mut data = Vec::with_capacity(d.sample() * items.len() * d.n);
        let mut n = 0;
        for t in items {
            if (t.dims.c, t.dims.h, t.dims.w) != (d.c, d.h, d.w) {
                return Err(Error::shape("stack", d, t.dims));
            }
            n += t.dims.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor4D {
            dims: Dims::new(n, d.c, d.h, d.w),
            data,
        })
    }

    /// Sample `n` as a standalone 1 x C x H x W tensor.
    pub fn select(&self, n: usize) -> Tensor4D {
        Tensor4D {
            dims: Dims::new(1, self.dims.c, self.dims.h, self.dims.w),
            data: self.sample(n).to_vec(),
        }
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}
