//! Per-channel batch normalization with running statistics.

use crate::error::{Error, Result};
use crate::tensor::Tensor4D;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormLayer {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub epsilon: f64,
    pub momentum: f64,
    pub mode: NormMode,
    pub lr_scale: f64,
    pub grad_gamma: Vec<f64>,
    pub grad_beta: Vec<f64>,
}

/// Values saved by a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    pub x_hat: Tensor4D,
    pub inv_std: Vec<f64>,
    pub mode: NormMode,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads {
    pub input: Tensor4D,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BatchNormLayer {
    pub const DEFAULT_EPSILON: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.1;

    pub fn new(channels: usize) -> Self {
        BatchNormLayer {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            epsilon: Self::DEFAULT_EPSILON,
            momentum: Self::DEFAULT_MOMENTUM,
            mode: NormMode::Train,
            lr_scale: 1.0,
            grad_gamma: vec![0.0; channels],
            grad_beta: vec![0.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad_gamma.fill(0.0);
        self.grad_beta.fill(0.0);
    }

    pub fn accumulate(&mut self, grads: &BatchNormGrads) {
        for (g, d) in self.grad_gamma.iter_mut().zip(&grads.gamma) {
            *g += d;
        }
        for (g, d) in self.grad_beta.iter_mut().zip(&grads.beta) {
            *g += d;
        }
    }
}

fn check_channels(input: &Tensor4D, layer: &BatchNormLayer) -> Result<()> {
    if input.dims().c != layer.channels() {
        return Err(Error::shape(
            "batchnorm",
            format!("input {}", input.dims()),
            format!("{} channels", layer.channels()),
        ));
    }
    Ok(())
}

/// Normalizes `input`. In train mode the batch statistics are used and the
/// running statistics are updated; in eval mode the running statistics are used.
pub fn batchnorm_forward(
    input: &Tensor4D,
    layer: &mut BatchNormLayer,
) -> Result<(Tensor4D, BatchNormCache)> {
    let (out, cache, stats) = batchnorm_normalize(input, layer, layer.mode)?;
    let m = layer.momentum;
    for (c, (mean, unbiased)) in stats.into_iter().enumerate() {
        layer.running_mean[c] = (1.0 - m) * layer.running_mean[c] + m * mean;
        layer.running_var[c] = (1.0 - m) * layer.running_var[c] + m * unbiased;
    }
    Ok((out, cache))
}

/// Normalization without touching the running statistics. In train mode the
/// per-channel batch mean and unbiased variance are returned.
pub(crate) fn batchnorm_normalize(
    input: &Tensor4D,
    layer: &BatchNormLayer,
    mode: NormMode,
) -> Result<(Tensor4D, BatchNormCache, Vec<(f64, f64)>)> {
    check_channels(input, layer)?;
    let d = input.dims();
    let count = d.n * d.plane();
    let mut out = Tensor4D::zeros(d);
    let mut x_hat = Tensor4D::zeros(d);
    let mut inv_std = vec![0.0; d.c];
    let mut stats = Vec::new();

    for c in 0..d.c {
        let (mean, var) = match mode {
            NormMode::Train => {
                if count < 2 {
                    return Err(Error::DegenerateBatch(count));
                }
                let mut sum = 0.0;
                for n in 0..d.n {
                    sum += input.plane(n, c).iter().sum::<f64>();
                }
                let mean = sum / count as f64;
                let mut sq = 0.0;
                for n in 0..d.n {
                    sq += input
                        .plane(n, c)
                        .iter()
                        .map(|v| (v - mean) * (v - mean))
                        .sum::<f64>();
                }
                stats.push((mean, sq / (count - 1) as f64));
                (mean, sq / count as f64)
            }
            NormMode::Eval => (layer.running_mean[c], layer.running_var[c]),
        };
        let istd = 1.0 / (var + layer.epsilon).sqrt();
        inv_std[c] = istd;
        let (g, b) = (layer.gamma[c], layer.beta[c]);
        for n in 0..d.n {
            let src = input.plane(n, c);
            let xh = x_hat.plane_mut(n, c);
            for (h, &v) in xh.iter_mut().zip(src) {
                *h = (v - mean) * istd;
            }
            let start = out.index(n, c, 0, 0);
            let dst = &mut out.data_mut()[start..start + d.plane()];
            for (o, &h) in dst.iter_mut().zip(x_hat.plane(n, c)) {
                *o = g * h + b;
            }
        }
    }
    Ok((
        out,
        BatchNormCache {
            x_hat,
            inv_std,
            mode,
        },
        stats,
    ))
}

pub fn batchnorm_backward(
    layer: &BatchNormLayer,
    cache: &BatchNormCache,
    grad_out: &Tensor4D,
) -> Result<BatchNormGrads> {
    cache.x_hat.ensure_dims(grad_out, "batchnorm_backward")?;
    let d = grad_out.dims();
    let count = (d.n * d.plane()) as f64;
    let mut grad_input = Tensor4D::zeros(d);
    let mut gamma = vec![0.0; d.c];
    let mut beta = vec![0.0; d.c];
    for c in 0..d.c {
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for n in 0..d.n {
            for (&g, &xh) in grad_out.plane(n, c).iter().zip(cache.x_hat.plane(n, c)) {
                sum_g += g;
                sum_gx += g * xh;
            }
        }
        gamma[c] = sum_gx;
        beta[c] = sum_g;
        let scale = layer.gamma[c] * cache.inv_std[c];
        for n in 0..d.n {
            let start = grad_input.index(n, c, 0, 0);
            let go = grad_out.plane(n, c);
            let xh = cache.x_hat.plane(n, c);
            let dst = &mut grad_input.data_mut()[start..start + d.plane()];
            match cache.mode {
                NormMode::Train => {
                    for i in 0..go.len() {
                        dst[i] = scale * (go[i] - sum_g / count - xh[i] * sum_gx / count);
                    }
                }
                NormMode::Eval => {
                    for i in 0..go.len() {
                        dst[i] = scale * go[i];
                    }
                }
            }
        }
    }
    Ok(BatchNormGrads {
        input: grad_input,
        gamma,
        beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims;

    #[test]
    fn standardized_input_passes_through() {
        let x = Tensor4D::from_vec(Dims::new(1, 1, 1, 4), vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let mut bn = BatchNormLayer::new(1);
        let (y, _) = batchnorm_forward(&x, &mut bn).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn eval_mode_uses_running_stats() {
        let x = Tensor4D::filled(Dims::new(2, 1, 3, 3), 0.7);
        let mut bn = BatchNormLayer::new(1);
        bn.gamma = vec![2.0];
        bn.beta = vec![3.0];
        bn.running_mean = vec![0.7];
        bn.running_var = vec![1.0];
        bn.mode = NormMode::Eval;
        let (y, _) = batchnorm_forward(&x, &mut bn).unwrap();
        assert!(y.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn running_stats_follow_momentum() {
        let x = Tensor4D::from_vec(Dims::new(1, 1, 1, 2), vec![1.0, 3.0]).unwrap();
        let mut bn = BatchNormLayer::new(1);
        batchnorm_forward(&x, &mut bn).unwrap();
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-15);
        // unbiased variance of {1, 3} is 2
        assert!((bn.running_var[0] - (0.9 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn single_sample_batch_is_degenerate() {
        let x = Tensor4D::zeros(Dims::new(1, 2, 1, 1));
        let mut bn = BatchNormLayer::new(2);
        assert!(matches!(
            batchnorm_forward(&x, &mut bn),
            Err(Error::DegenerateBatch(1))
        ));
        bn.mode = NormMode::Eval;
        assert!(batchnorm_forward(&x, &mut bn).is_ok());
    }
}
