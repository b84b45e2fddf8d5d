use crate::error::Result;
use crate::tensor::Tensor4D;

/// Squared L2 distance summed per sample and averaged over the batch.
///
/// Returns the loss and its gradient with respect to `pred`.
pub fn l2_loss(pred: &Tensor4D, target: &Tensor4D) -> Result<(f64, Tensor4D)> {
    pred.ensure_dims(target, "l2_loss")?;
    let n = pred.dims().n.max(1) as f64;
    let mut grad = Tensor4D::zeros(pred.dims());
    let mut loss = 0.0;
    for ((g, &p), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
    {
        let diff = p - t;
        loss += diff * diff;
        *g = 2.0 * diff / n;
    }
    Ok((loss / n, grad))
}
