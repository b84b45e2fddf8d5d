//! Whole-image reconstruction and directory evaluation.

use std::path::Path;

use log::warn;

use crate::cfa::{bilinear_fill, lsq_color_baseline, mosaic, CfaPattern, PlaneStack};
use crate::error::{Error, Result};
use crate::metrics::{EvaluationReport, MetricReport};
use crate::models::{Model, Source};
use crate::svec::{from_unit, svec_mosaic, svec_pattern, SvecConfig};
use crate::tensor::Tensor4D;
use crate::train::loss_target;

/// How test images are sampled before reconstruction.
#[derive(Clone, Debug)]
pub enum EvalSampling {
    Cfa(CfaPattern),
    Svec(SvecConfig),
    /// The model's own pattern layer samples the image.
    Learned,
}

#[derive(Clone, Copy, Debug)]
pub enum Reconstructor<'a> {
    Model(&'a Model),
    /// The interpolation baseline alone.
    Baseline,
}

/// True when the pattern's planes are plain R, G, B at unit exposure, in
/// which case the bilinear fill is already an RGB image.
pub fn is_rgb_layout(pattern: &CfaPattern) -> bool {
    let l = pattern.plane_layout();
    let rgb = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    l.filters == rgb && l.exposures.iter().all(|&e| e == 1.0)
}

/// Bilinear RGB for R/G/B patterns, least-squares color otherwise. Not clamped
/// for R/G/B layouts; the least-squares solution is clamped to `[0, 1]`.
pub fn baseline_demosaic(stack: &PlaneStack, pattern: &CfaPattern) -> Result<Tensor4D> {
    let filled = bilinear_fill(stack, pattern)?;
    if is_rgb_layout(pattern) {
        Ok(filled)
    } else {
        lsq_color_baseline(&filled, &pattern.plane_layout(), &pattern.name)
    }
}

fn sample(truth: &Tensor4D, sampling: &EvalSampling) -> Result<Option<(PlaneStack, CfaPattern)>> {
    Ok(match sampling {
        EvalSampling::Cfa(p) => Some((mosaic(truth, p)?, p.clone())),
        EvalSampling::Svec(cfg) => {
            Some((svec_mosaic(&from_unit(truth, cfg), cfg)?, svec_pattern(cfg)))
        }
        EvalSampling::Learned => None,
    })
}

/// Reconstructs `truth` (values in `[0, 1]`) and returns the clamped output
/// with the matching, possibly center-cropped, truth.
pub fn reconstruct(
    rec: Reconstructor<'_>,
    truth: &Tensor4D,
    sampling: &EvalSampling,
) -> Result<(Tensor4D, Tensor4D)> {
    let sampled = sample(truth, sampling)?;
    let (out, target) = match (rec, &sampled) {
        (Reconstructor::Model(m), Some((stack, p))) => {
            (m.infer(Source::Stack(stack, p))?, loss_target(m, truth)?)
        }
        (Reconstructor::Model(m), None) => (m.infer(Source::Rgb(truth))?, loss_target(m, truth)?),
        (Reconstructor::Baseline, Some((stack, p))) => {
            (baseline_demosaic(stack, p)?, truth.clone())
        }
        (Reconstructor::Baseline, None) => {
            return Err(Error::Config(
                "a learned pattern needs model weights".into(),
            ))
        }
    };
    Ok((out.clamp(0.0, 1.0), target))
}

/// Evaluates every file in `paths` in the given order. `load` turns a file
/// into a `[0, 1]` truth image; metrics are computed on the `[0, peak]`
/// scale. Files that fail to load or reconstruct are reported as skipped.
pub fn evaluate_files(
    rec: Reconstructor<'_>,
    paths: &[impl AsRef<Path>],
    sampling: &EvalSampling,
    border: usize,
    peak: f64,
    load: impl Fn(&Path) -> Result<Tensor4D>,
) -> EvaluationReport {
    let mut report = EvaluationReport::default();
    for path in paths {
        let path = path.as_ref();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let result = load(path)
            .and_then(|img| reconstruct(rec, &img, sampling))
            .and_then(|(out, truth)| score(&name, &out, &truth, peak, border));
        match result {
            Ok(r) => report.images.push(r),
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                report.skipped.push((name, e.to_string()));
            }
        }
    }
    report
}

/// Metrics of `[0, 1]` images on the `[0, peak]` scale.
pub fn score(
    name: &str,
    out: &Tensor4D,
    truth: &Tensor4D,
    peak: f64,
    border: usize,
) -> Result<MetricReport> {
    let scale = |t: &Tensor4D| t.map(|v| v * peak);
    MetricReport::compute(name, &scale(out), &scale(truth), peak, border)
}
