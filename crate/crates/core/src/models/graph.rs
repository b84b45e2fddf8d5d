use crate::cfa::{CfaPattern, FillOperator, LsqColor, PlaneLayout, PlaneStack};
use crate::error::{Error, Result};
use crate::layers::batchnorm::batchnorm_normalize;
use crate::layers::{
    batchnorm_backward, conv2d_backward, conv2d_forward, relu, relu_backward, selu, selu_backward,
    BatchNormCache, BatchNormLayer, ConvLayer, NormMode,
};
use crate::optim::ParamMut;
use crate::tensor::Tensor4D;

use super::pattern_layer::{pattern_backward, pattern_forward, PatternLayer};

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv(ConvLayer),
    BatchNorm(BatchNormLayer),
    Relu,
    Selu,
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv(_) => LayerKind::Conv,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::Relu => LayerKind::Relu,
            Layer::Selu => LayerKind::Selu,
        }
    }
}

/// Every stage of a model, including the ones outside the layer list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Pattern,
    Conv,
    BatchNorm,
    Relu,
    Selu,
    ResidualAdd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    Dmcnn,
    DmcnnVd,
    DmcnnVdPa,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Dmcnn => "dmcnn",
            Architecture::DmcnnVd => "dmcnn_vd",
            Architecture::DmcnnVdPa => "dmcnn_vd_pa",
        }
    }
}

/// What the network sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputMode {
    /// The plane stack with zeros at unsampled sites.
    Sparse,
    /// The plane stack after per-plane bilinear interpolation.
    Filled,
}

/// What the network output is added to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResidualBaseline {
    None,
    /// Filled R, G, B planes used directly.
    BilinearRgb,
    /// Least-squares color from the filled planes and the plane filters.
    LsqPattern,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub input_channels: usize,
    pub output_channels: usize,
    pub input_mode: InputMode,
    pub baseline: ResidualBaseline,
    pub pattern: Option<PatternLayer>,
    pub layers: Vec<Layer>,
}

/// Input to a forward pass.
#[derive(Clone, Copy, Debug)]
pub enum Source<'a> {
    /// A mosaic and the pattern that produced it.
    Stack(&'a PlaneStack, &'a CfaPattern),
    /// Full RGB; sampled by the model's pattern layer.
    Rgb(&'a Tensor4D),
}

/// Intermediate values of a forward pass, consumed by [`Model::backward`].
#[derive(Debug)]
pub struct ForwardPass {
    pub output: Tensor4D,
    pub baseline: Option<Tensor4D>,
    rgb: Option<Tensor4D>,
    fill: FillOperator,
    filled: Option<Tensor4D>,
    lsq: Option<LsqColor>,
    layer_inputs: Vec<Tensor4D>,
    bn_caches: Vec<Option<BatchNormCache>>,
}

impl Model {
    pub fn conv_layers(&self) -> impl Iterator<Item = &ConvLayer> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Conv(c) => Some(c),
            _ => None,
        })
    }

    pub fn conv_layers_mut(&mut self) -> impl Iterator<Item = &mut ConvLayer> {
        self.layers.iter_mut().filter_map(|l| match l {
            Layer::Conv(c) => Some(c),
            _ => None,
        })
    }

    pub fn last_conv_mut(&mut self) -> Option<&mut ConvLayer> {
        self.conv_layers_mut().last()
    }

    /// Full stage sequence, including the pattern layer and residual add.
    pub fn stages(&self) -> Vec<LayerKind> {
        let mut out = Vec::new();
        if self.pattern.is_some() {
            out.push(LayerKind::Pattern);
        }
        out.extend(self.layers.iter().map(Layer::kind));
        if self.baseline != ResidualBaseline::None {
            out.push(LayerKind::ResidualAdd);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        let body: usize = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => c.param_count(),
                Layer::BatchNorm(b) => 2 * b.channels(),
                _ => 0,
            })
            .sum();
        body + self.pattern.as_ref().map_or(0, |p| p.weights.len())
    }

    /// Total rows and columns lost to unpadded convolutions.
    pub fn shrinkage(&self) -> (usize, usize) {
        self.conv_layers().fold((0, 0), |(h, w), c| {
            let (kh, kw) = c.kernel_size();
            (h + kh - 1 - 2 * c.padding, w + kw - 1 - 2 * c.padding)
        })
    }

    pub fn set_mode(&mut self, mode: NormMode) {
        for l in &mut self.layers {
            if let Layer::BatchNorm(b) = l {
                b.mode = mode;
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            match l {
                Layer::Conv(c) => c.zero_grad(),
                Layer::BatchNorm(b) => b.zero_grad(),
                _ => {}
            }
        }
        if let Some(p) = &mut self.pattern {
            p.zero_grad();
        }
    }

    /// Parameter buffers with their gradients, in a fixed order.
    pub fn params(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        if let Some(p) = &mut self.pattern {
            out.push(ParamMut {
                name: "pattern".into(),
                value: &mut p.weights,
                grad: &p.grad,
                lr_scale: p.lr_scale,
            });
        }
        for (i, l) in self.layers.iter_mut().enumerate() {
            match l {
                Layer::Conv(ConvLayer {
                    kernel,
                    bias,
                    lr_scale,
                    grad_kernel,
                    grad_bias,
                    ..
                }) => {
                    out.push(ParamMut {
                        name: format!("layer{i}.kernel"),
                        value: kernel.data_mut(),
                        grad: grad_kernel.data(),
                        lr_scale: *lr_scale,
                    });
                    out.push(ParamMut {
                        name: format!("layer{i}.bias"),
                        value: bias,
                        grad: grad_bias,
                        lr_scale: *lr_scale,
                    });
                }
                Layer::BatchNorm(BatchNormLayer {
                    gamma,
                    beta,
                    grad_gamma,
                    grad_beta,
                    lr_scale,
                    ..
                }) => {
                    out.push(ParamMut {
                        name: format!("layer{i}.gamma"),
                        value: gamma,
                        grad: grad_gamma,
                        lr_scale: *lr_scale,
                    });
                    out.push(ParamMut {
                        name: format!("layer{i}.beta"),
                        value: beta,
                        grad: grad_beta,
                        lr_scale: *lr_scale,
                    });
                }
                _ => {}
            }
        }
        out
    }

    /// Plane layout the network input follows for a given mosaic pattern.
    pub fn layout_for(&self, pattern: &CfaPattern) -> PlaneLayout {
        match &self.pattern {
            Some(p) => {
                let mut l = pattern.per_cell_layout();
                l.filters = (0..p.cells()).map(|i| p.cell(i)).collect();
                l
            }
            None => pattern.plane_layout(),
        }
    }

    /// Training-capable forward pass. Batch-norm layers use their own mode
    /// and update running statistics in train mode.
    pub fn forward(&mut self, source: Source<'_>) -> Result<ForwardPass> {
        let mut stats = Some(Vec::new());
        let pass = self.run_shared(source, &mut stats)?;
        let mut batches = stats.unwrap_or_default().into_iter();
        for l in &mut self.layers {
            if let Layer::BatchNorm(b) = l {
                if b.mode == NormMode::Train {
                    let batch = batches
                        .next()
                        .expect("one stats entry per train-mode batch norm");
                    let m = b.momentum;
                    for (c, (mean, var)) in batch.into_iter().enumerate() {
                        b.running_mean[c] = (1.0 - m) * b.running_mean[c] + m * mean;
                        b.running_var[c] = (1.0 - m) * b.running_var[c] + m * var;
                    }
                }
            }
        }
        Ok(pass)
    }

    /// Eval-mode forward pass that leaves the model untouched.
    pub fn infer(&self, source: Source<'_>) -> Result<Tensor4D> {
        let mut shadow = None;
        Ok(self.run_shared(source, &mut shadow)?.output)
    }

    /// `stats`: `Some` for a training pass (batch norm uses each layer's mode
    /// and batch statistics are collected), `None` for pure inference.
    fn run_shared(
        &self,
        source: Source<'_>,
        stats: &mut Option<Vec<Vec<(f64, f64)>>>,
    ) -> Result<ForwardPass> {
        let (stack, layout, rgb) = match (source, &self.pattern) {
            (Source::Rgb(img), Some(p)) => {
                let stack = pattern_forward(img, p)?;
                let layout = self.layout_for(&p.to_pattern("learned")?);
                (stack, layout, Some(img.clone()))
            }
            (Source::Rgb(_), None) => {
                return Err(Error::Config(
                    "model has no pattern layer; pass a mosaic instead of RGB".into(),
                ))
            }
            (Source::Stack(stack, pattern), _) => {
                let layout = self.layout_for(pattern);
                (stack.clone(), layout, None)
            }
        };
        if stack.planes_count() != self.input_channels {
            return Err(Error::shape(
                "forward_demosaic",
                format!("{} input planes", stack.planes_count()),
                format!("model expecting {} channels", self.input_channels),
            ));
        }
        if layout.planes() != self.input_channels {
            return Err(Error::shape(
                "forward_demosaic",
                format!("pattern with {} planes", layout.planes()),
                format!("model expecting {} channels", self.input_channels),
            ));
        }
        let fill = FillOperator::for_stack(&stack, layout.tile_h, layout.tile_w)?;
        let needs_fill =
            self.input_mode == InputMode::Filled || self.baseline != ResidualBaseline::None;
        let filled = if needs_fill {
            Some(fill.apply(&stack.planes)?)
        } else {
            None
        };

        let (baseline, lsq) = match self.baseline {
            ResidualBaseline::None => (None, None),
            ResidualBaseline::BilinearRgb => {
                if layout.planes() != 3 {
                    return Err(Error::shape(
                        "bilinear baseline",
                        format!("{} planes", layout.planes()),
                        "3 RGB planes",
                    ));
                }
                (filled.clone(), None)
            }
            ResidualBaseline::LsqPattern => {
                let name = if self.pattern.is_some() {
                    "learned"
                } else {
                    "pattern"
                };
                let lsq = LsqColor::for_layout(&layout, name)?;
                (
                    Some(lsq.apply(filled.as_ref().expect("filled"))?),
                    Some(lsq),
                )
            }
        };

        let net_input = match self.input_mode {
            InputMode::Filled => filled.clone().expect("filled"),
            InputMode::Sparse => stack.planes.clone(),
        };

        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut bn_caches = Vec::with_capacity(self.layers.len());
        let mut x = net_input;
        for layer in &self.layers {
            let (y, cache) = match layer {
                Layer::Conv(c) => (conv2d_forward(&x, c)?, None),
                Layer::Relu => (relu(&x), None),
                Layer::Selu => (selu(&x), None),
                Layer::BatchNorm(b) => {
                    let mode = if stats.is_some() {
                        b.mode
                    } else {
                        NormMode::Eval
                    };
                    let (y, cache, s) = batchnorm_normalize(&x, b, mode)?;
                    if let (Some(all), NormMode::Train) = (stats.as_mut(), mode) {
                        all.push(s);
                    }
                    (y, Some(cache))
                }
            };
            layer_inputs.push(std::mem::replace(&mut x, y));
            bn_caches.push(cache);
        }

        if x.dims().c != self.output_channels {
            return Err(Error::shape(
                "forward",
                format!("network output {}", x.dims()),
                format!("{} output channels", self.output_channels),
            ));
        }
        let output = match &baseline {
            Some(b) => x.add(b)?,
            None => x,
        };
        if !output.is_finite() {
            return Err(Error::NonFinite("model output".into()));
        }
        Ok(ForwardPass {
            output,
            baseline,
            rgb,
            fill,
            filled,
            lsq,
            layer_inputs,
            bn_caches,
        })
    }

    /// Accumulates parameter gradients for `d loss / d output = grad_output`.
    pub fn backward(&mut self, pass: &ForwardPass, grad_output: &Tensor4D) -> Result<()> {
        pass.output.ensure_dims(grad_output, "backward")?;
        let mut g = grad_output.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let input = &pass.layer_inputs[i];
            g = match layer {
                Layer::Conv(c) => {
                    let grads = conv2d_backward(input, c, &g)?;
                    c.accumulate(&grads);
                    grads.input
                }
                Layer::Relu => relu_backward(input, &g)?,
                Layer::Selu => selu_backward(input, &g)?,
                Layer::BatchNorm(b) => {
                    let cache = pass.bn_caches[i].as_ref().expect("batch norm cache");
                    let grads = batchnorm_backward(b, cache, &g)?;
                    b.accumulate(&grads);
                    grads.input
                }
            };
        }

        let (Some(pattern), Some(rgb)) = (self.pattern.as_mut(), pass.rgb.as_ref()) else {
            return Ok(());
        };
        // g is now d loss / d network input.
        let mut grad_filled = match self.input_mode {
            InputMode::Filled => Some(g.clone()),
            InputMode::Sparse => None,
        };
        let mut grad_filters = None;
        if let (Some(lsq), Some(filled)) = (&pass.lsq, &pass.filled) {
            let lg = lsq.backward(filled, grad_output)?;
            grad_filled = Some(match grad_filled {
                Some(gf) => gf.add(&lg.filled)?,
                None => lg.filled,
            });
            grad_filters = Some(lg.filters);
        } else if self.baseline == ResidualBaseline::BilinearRgb {
            let gf = grad_filled.take();
            grad_filled = Some(match gf {
                Some(gf) => gf.add(grad_output)?,
                None => grad_output.clone(),
            });
        }
        let mut grad_planes = match grad_filled {
            Some(gf) => pass.fill.apply_transpose(&gf)?,
            None => Tensor4D::zeros(pass.fill.dims(rgb.dims().n)),
        };
        if self.input_mode == InputMode::Sparse {
            grad_planes = grad_planes.add(&g)?;
        }
        let gw = pattern_backward(rgb, pattern, &grad_planes)?;
        for (a, b) in pattern.grad.iter_mut().zip(&gw) {
            *a += b;
        }
        if let Some(gf) = grad_filters {
            for (cell, f) in gf.iter().enumerate() {
                for c in 0..3 {
                    pattern.grad[3 * cell + c] += f[c];
                }
            }
        }
        Ok(())
    }
}

/// Runs `model` on a mosaic in eval mode. The result is not clamped.
pub fn forward_demosaic(
    model: &Model,
    stack: &PlaneStack,
    pattern: &CfaPattern,
) -> Result<Tensor4D> {
    model.infer(Source::Stack(stack, pattern))
}
