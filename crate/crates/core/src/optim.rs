//! SGD with global-norm clipping, and Adam.

use crate::error::{Error, Result};

/// One parameter buffer with its accumulated gradient.
pub struct ParamMut<'a> {
    pub name: String,
    pub value: &'a mut [f64],
    pub grad: &'a [f64],
    pub lr_scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    /// Plain SGD after clipping the global L2 norm of all gradients.
    SgdClip {
        clip: f64,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimizerKind {
    pub const DEFAULT_CLIP: f64 = 1.0;

    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd_clip(clip: f64) -> Self {
        OptimizerKind::SgdClip { clip }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub step: u64,
    /// Adam first and second moments, one pair per parameter buffer.
    pub moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            step: 0,
            moments: Vec::new(),
        }
    }

    /// Applies one update. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [ParamMut<'_>]) -> Result<()> {
        for p in params.iter() {
            if p.value.len() != p.grad.len() {
                return Err(Error::shape(
                    "optimizer_step",
                    format!("{} value len {}", p.name, p.value.len()),
                    format!("grad len {}", p.grad.len()),
                ));
            }
            if let Some(i) = p.grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of {}[{}] = {} at step {}",
                    p.name,
                    i,
                    p.grad[i],
                    self.step + 1
                )));
            }
        }
        if let OptimizerKind::Adam { .. } = self.kind {
            if self.moments.is_empty() {
                self.moments = params
                    .iter()
                    .map(|p| (vec![0.0; p.value.len()], vec![0.0; p.value.len()]))
                    .collect();
            }
            if self.moments.len() != params.len()
                || self
                    .moments
                    .iter()
                    .zip(params.iter())
                    .any(|(m, p)| m.0.len() != p.value.len())
            {
                return Err(Error::shape(
                    "optimizer_step",
                    format!("{} moment buffers", self.moments.len()),
                    format!("{} parameters", params.len()),
                ));
            }
        }
        self.step += 1;

        match self.kind {
            OptimizerKind::SgdClip { clip } => {
                let norm = params
                    .iter()
                    .flat_map(|p| p.grad.iter())
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt();
                let scale = if norm > clip { clip / norm } else { 1.0 };
                for p in params.iter_mut() {
                    let lr = self.lr * p.lr_scale * scale;
                    for (v, g) in p.value.iter_mut().zip(p.grad) {
                        *v -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (p, (m, v)) in params.iter_mut().zip(self.moments.iter_mut()) {
                    let lr = self.lr * p.lr_scale;
                    for i in 0..p.value.len() {
                        let g = p.grad[i];
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p.value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
