//! Stride-1 2-D convolution (cross-correlation) via im2col + GEMM.

use rayon::prelude::*;

use super::gemm::gemm;
use crate::error::{Error, Result};
use crate::tensor::{Dims, Tensor4D};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    /// `out_c x in_c x kh x kw`.
    pub kernel: Tensor4D,
    pub bias: Vec<f64>,
    pub padding: usize,
    /// Multiplier on the optimizer's base learning rate.
    pub lr_scale: f64,
    pub grad_kernel: Tensor4D,
    pub grad_bias: Vec<f64>,
}

/// Gradients of a scalar loss with respect to a convolution's inputs.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor4D,
    pub kernel: Tensor4D,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn new(in_c: usize, out_c: usize, kh: usize, kw: usize, padding: usize) -> Result<Self> {
        if kh == 0 || kw == 0 || in_c == 0 || out_c == 0 {
            return Err(Error::Config(format!(
                "conv layer needs positive sizes, got {out_c}x{in_c}x{kh}x{kw}"
            )));
        }
        let kdims = Dims::new(out_c, in_c, kh, kw);
        Ok(ConvLayer {
            kernel: Tensor4D::zeros(kdims),
            bias: vec![0.0; out_c],
            padding,
            lr_scale: 1.0,
            grad_kernel: Tensor4D::zeros(kdims),
            grad_bias: vec![0.0; out_c],
        })
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.dims().c
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.dims().n
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernel.dims().h, self.kernel.dims().w)
    }

    pub fn param_count(&self) -> usize {
        self.kernel.dims().len() + self.bias.len()
    }

    pub fn output_dims(&self, input: Dims) -> Result<Dims> {
        let (kh, kw) = self.kernel_size();
        if input.c != self.in_channels() {
            return Err(Error::shape(
                "conv2d",
                format!("input {input}"),
                format!("kernel {}", self.kernel.dims()),
            ));
        }
        let ph = input.h + 2 * self.padding;
        let pw = input.w + 2 * self.padding;
        if ph < kh || pw < kw {
            return Err(Error::shape(
                "conv2d",
                format!("input {input} padded by {}", self.padding),
                format!("kernel {}", self.kernel.dims()),
            ));
        }
        Ok(Dims::new(
            input.n,
            self.out_channels(),
            ph - kh + 1,
            pw - kw + 1,
        ))
    }

    pub fn zero_grad(&mut self) {
        self.grad_kernel.data_mut().fill(0.0);
        self.grad_bias.fill(0.0);
    }

    pub fn accumulate(&mut self, grads: &ConvGrads) {
        for (g, d) in self
            .grad_kernel
            .data_mut()
            .iter_mut()
            .zip(grads.kernel.data())
        {
            *g += d;
        }
        for (g, d) in self.grad_bias.iter_mut().zip(&grads.bias) {
            *g += d;
        }
    }
}

struct Geometry {
    in_c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn im2col(&self, sample: &[f64], col: &mut [f64]) {
        let cols = self.cols();
        for ic in 0..self.in_c {
            let plane = &sample[ic * self.h * self.w..(ic + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ic * self.kh + ky) * self.kw + kx;
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    for oy in 0..self.oh {
                        let iy = (oy + ky) as isize - self.pad as isize;
                        let out_row = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        if iy < 0 || iy >= self.h as isize {
                            out_row.fill(0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, o) in out_row.iter_mut().enumerate() {
                            let ix = (ox + kx) as isize - self.pad as isize;
                            *o = if ix < 0 || ix >= self.w as isize {
                                0.0
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[f64], sample: &mut [f64]) {
        let cols = self.cols();
        for ic in 0..self.in_c {
            let plane = &mut sample[ic * self.h * self.w..(ic + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ic * self.kh + ky) * self.kw + kx;
                    let src = &col[row * cols..(row + 1) * cols];
                    for oy in 0..self.oh {
                        let iy = (oy + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for ox in 0..self.ow {
                            let ix = (ox + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] += src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn geometry(input: Dims, layer: &ConvLayer) -> Result<(Geometry, Dims)> {
    let out = layer.output_dims(input)?;
    let (kh, kw) = layer.kernel_size();
    Ok((
        Geometry {
            in_c: input.c,
            h: input.h,
            w: input.w,
            kh,
            kw,
            pad: layer.padding,
            oh: out.h,
            ow: out.w,
        },
        out,
    ))
}

/// Cross-correlates `input` with the layer's kernel (no flip) and adds the bias.
pub fn conv2d_forward(input: &Tensor4D, layer: &ConvLayer) -> Result<Tensor4D> {
    let (geo, out_dims) = geometry(input.dims(), layer)?;
    let mut out = Tensor4D::zeros(out_dims);
    let out_c = out_dims.c;
    let (rows, cols) = (geo.rows(), geo.cols());
    let kernel = layer.kernel.data();
    let in_sample = input.dims().sample();
    out.data_mut()
        .par_chunks_mut(out_dims.sample())
        .enumerate()
        .for_each(|(n, dst)| {
            let sample = &input.data()[n * in_sample..(n + 1) * in_sample];
            let mut col = vec![0.0; rows * cols];
            geo.im2col(sample, &mut col);
            for (oc, chunk) in dst.chunks_mut(cols).enumerate() {
                chunk.fill(layer.bias[oc]);
            }
            gemm(out_c, rows, cols, 1.0, kernel, false, &col, false, 1.0, dst);
        });
    Ok(out)
}

/// Gradients of the loss with respect to input, kernel and bias given the
/// upstream gradient `grad_out`.
pub fn conv2d_backward(
    input: &Tensor4D,
    layer: &ConvLayer,
    grad_out: &Tensor4D,
) -> Result<ConvGrads> {
    let (geo, out_dims) = geometry(input.dims(), layer)?;
    if grad_out.dims() != out_dims {
        return Err(Error::shape(
            "conv2d_backward",
            format!("grad_out {}", grad_out.dims()),
            format!("expected {out_dims}"),
        ));
    }
    let out_c = out_dims.c;
    let (rows, cols) = (geo.rows(), geo.cols());
    let kernel = layer.kernel.data();
    let in_sample = input.dims().sample();
    let out_sample = out_dims.sample();

    let mut grad_input = Tensor4D::zeros(input.dims());
    let partials: Vec<(Vec<f64>, Vec<f64>)> = grad_input
        .data_mut()
        .par_chunks_mut(in_sample)
        .enumerate()
        .map(|(n, gin)| {
            let sample = &input.data()[n * in_sample..(n + 1) * in_sample];
            let gout = &grad_out.data()[n * out_sample..(n + 1) * out_sample];
            let mut col = vec![0.0; rows * cols];
            geo.im2col(sample, &mut col);

            let mut gk = vec![0.0; out_c * rows];
            gemm(
                out_c, cols, rows, 1.0, gout, false, &col, true, 0.0, &mut gk,
            );
            let gb: Vec<f64> = gout.chunks(cols).map(|c| c.iter().sum()).collect();

            let mut gcol = col;
            gemm(
                rows, out_c, cols, 1.0, kernel, true, gout, false, 0.0, &mut gcol,
            );
            geo.col2im(&gcol, gin);
            (gk, gb)
        })
        .collect();

    // Fixed-order reduction keeps results independent of the thread count.
    let mut grad_kernel = Tensor4D::zeros(layer.kernel.dims());
    let mut grad_bias = vec![0.0; out_c];
    for (gk, gb) in &partials {
        for (a, b) in grad_kernel.data_mut().iter_mut().zip(gk) {
            *a += b;
        }
        for (a, b) in grad_bias.iter_mut().zip(gb) {
            *a += b;
        }
    }
    Ok(ConvGrads {
        input: grad_input,
        kernel: grad_kernel,
        bias: grad_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer_with(kernel: Tensor4D, bias: Vec<f64>, padding: usize) -> ConvLayer {
        let d = kernel.dims();
        let mut l = ConvLayer::new(d.c, d.n, d.h, d.w, padding).unwrap();
        l.kernel = kernel;
        l.bias = bias;
        l
    }

    #[test]
    fn identity_scalar() {
        let l = layer_with(
            Tensor4D::from_vec(Dims::new(1, 1, 1, 1), vec![1.0]).unwrap(),
            vec![0.0],
            0,
        );
        let x = Tensor4D::from_vec(Dims::new(1, 1, 1, 1), vec![5.0]).unwrap();
        assert_eq!(conv2d_forward(&x, &l).unwrap().data(), &[5.0]);
    }

    #[test]
    fn ones_with_padding_counts_window_overlap() {
        let l = layer_with(Tensor4D::filled(Dims::new(1, 1, 3, 3), 1.0), vec![0.0], 1);
        let x = Tensor4D::filled(Dims::new(1, 1, 3, 3), 1.0);
        let y = conv2d_forward(&x, &l).unwrap();
        assert_eq!(y.dims(), Dims::new(1, 1, 3, 3));
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn scalar_backward_chain_rule() {
        let l = layer_with(
            Tensor4D::from_vec(Dims::new(1, 1, 1, 1), vec![3.0]).unwrap(),
            vec![0.0],
            0,
        );
        let x = Tensor4D::from_vec(Dims::new(1, 1, 1, 1), vec![2.0]).unwrap();
        let g = Tensor4D::from_vec(Dims::new(1, 1, 1, 1), vec![1.0]).unwrap();
        let grads = conv2d_backward(&x, &l, &g).unwrap();
        assert_eq!(grads.input.data(), &[3.0]);
        assert_eq!(grads.kernel.data(), &[2.0]);
        assert_eq!(grads.bias, vec![1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let l = layer_with(
            Tensor4D::filled(Dims::new(2, 3, 3, 3), 0.7),
            vec![0.1, 0.2],
            1,
        );
        let x = Tensor4D::filled(Dims::new(2, 3, 4, 4), 0.3);
        let g = Tensor4D::zeros(Dims::new(2, 2, 4, 4));
        let grads = conv2d_backward(&x, &l, &g).unwrap();
        assert!(grads.input.data().iter().all(|&v| v == 0.0));
        assert!(grads.kernel.data().iter().all(|&v| v == 0.0));
        assert!(grads.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch_reports_both_shapes() {
        let l = ConvLayer::new(3, 4, 3, 3, 1).unwrap();
        let x = Tensor4D::zeros(Dims::new(1, 2, 5, 5));
        let msg = conv2d_forward(&x, &l).unwrap_err().to_string();
        assert!(msg.contains("1x2x5x5") && msg.contains("4x3x3x3"), "{msg}");
    }

    #[test]
    fn kernel_larger_than_padded_input_is_rejected() {
        let l = ConvLayer::new(1, 1, 9, 9, 0).unwrap();
        assert!(conv2d_forward(&Tensor4D::zeros(Dims::new(1, 1, 5, 5)), &l).is_err());
    }

    #[test]
    fn grad_out_shape_checked() {
        let l = ConvLayer::new(1, 1, 3, 3, 0).unwrap();
        let x = Tensor4D::zeros(Dims::new(1, 1, 5, 5));
        let g = Tensor4D::zeros(Dims::new(1, 1, 5, 5));
        assert!(matches!(
            conv2d_backward(&x, &l, &g),
            Err(Error::Shape { .. })
        ));
    }
}
