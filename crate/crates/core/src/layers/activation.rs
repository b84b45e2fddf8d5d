use crate::error::Result;
use crate::tensor::Tensor4D;

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;

pub fn relu(input: &Tensor4D) -> Tensor4D {
    input.map(|v| v.max(0.0))
}

/// Passes the gradient where `input > 0`; zero elsewhere, including at 0.
pub fn relu_backward(input: &Tensor4D, grad_out: &Tensor4D) -> Result<Tensor4D> {
    input.ensure_dims(grad_out, "relu_backward")?;
    let mut g = grad_out.clone();
    for (g, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(g)
}

#[inline]
pub fn selu_scalar(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

pub fn selu(input: &Tensor4D) -> Tensor4D {
    input.map(selu_scalar)
}

pub fn selu_backward(input: &Tensor4D, grad_out: &Tensor4D) -> Result<Tensor4D> {
    input.ensure_dims(grad_out, "selu_backward")?;
    let mut g = grad_out.clone();
    for (g, &x) in g.data_mut().iter_mut().zip(input.data()) {
        *g *= if x > 0.0 {
            SELU_LAMBDA
        } else {
            SELU_LAMBDA * SELU_ALPHA * x.exp()
        };
    }
    Ok(g)
}
