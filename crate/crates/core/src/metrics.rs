//! PSNR, CPSNR and MSE, plus CSV reports over image sets.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor4D;

pub const MAX_8BIT: f64 = 255.0;

pub fn mse(pred: &Tensor4D, truth: &Tensor4D) -> Result<f64> {
    pred.ensure_dims(truth, "mse")?;
    let n = pred.dims().len();
    if n == 0 {
        return Err(Error::shape("mse", "empty tensor", "at least one element"));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n as f64)
}

/// Plain mean squared error in normalized radiance units.
pub fn mse_radiance(pred: &Tensor4D, truth: &Tensor4D) -> Result<f64> {
    mse(pred, truth)
}

/// `10 log10(max^2 / mse)`; infinite when the images are identical.
pub fn psnr_from_mse(mse: f64, max_val: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max_val * max_val / mse).log10()
    }
}

pub fn psnr(pred: &Tensor4D, truth: &Tensor4D, max_val: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(pred, truth)?, max_val))
}

fn channel_mse(pred: &Tensor4D, truth: &Tensor4D, border: usize) -> Result<[f64; 3]> {
    pred.ensure_dims(truth, "cpsnr")?;
    let d = pred.dims();
    if d.c != 3 {
        return Err(Error::shape("cpsnr", d, "3 channels"));
    }
    if 2 * border >= d.h || 2 * border >= d.w {
        return Err(Error::shape(
            "cpsnr",
            format!("image {}x{}", d.h, d.w),
            format!("border crop of {border} leaves nothing"),
        ));
    }
    let mut out = [0.0; 3];
    let count = (d.n * (d.h - 2 * border) * (d.w - 2 * border)) as f64;
    for (c, o) in out.iter_mut().enumerate() {
        let mut sum = 0.0;
        for n in 0..d.n {
            for y in border..d.h - border {
                for x in border..d.w - border {
                    let e = pred.get(n, c, y, x) - truth.get(n, c, y, x);
                    sum += e * e;
                }
            }
        }
        *o = sum / count;
    }
    Ok(out)
}

/// PSNR of the MSE averaged over R, G and B, after cropping `border` pixels
/// from each side.
pub fn cpsnr(pred: &Tensor4D, truth: &Tensor4D, max_val: f64, border: usize) -> Result<f64> {
    let m = channel_mse(pred, truth, border)?;
    Ok(psnr_from_mse((m[0] + m[1] + m[2]) / 3.0, max_val))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub name: String,
    pub psnr_r: f64,
    pub psnr_g: f64,
    pub psnr_b: f64,
    pub cpsnr: f64,
    /// Mean over channels, in squared `max_val` units.
    pub mse: f64,
    pub pixels: usize,
    pub border_crop: usize,
}

impl MetricReport {
    /// Metrics for images stored in `[0, 1]`, computed on the `[0, 255]` scale.
    pub fn for_unit_images(
        name: impl Into<String>,
        pred: &Tensor4D,
        truth: &Tensor4D,
        border: usize,
    ) -> Result<Self> {
        let scale = |t: &Tensor4D| t.map(|v| v * MAX_8BIT);
        Self::compute(name, &scale(pred), &scale(truth), MAX_8BIT, border)
    }

    pub fn compute(
        name: impl Into<String>,
        pred: &Tensor4D,
        truth: &Tensor4D,
        max_val: f64,
        border: usize,
    ) -> Result<Self> {
        let m = channel_mse(pred, truth, border)?;
        let d = pred.dims();
        let mean = (m[0] + m[1] + m[2]) / 3.0;
        Ok(MetricReport {
            name: name.into(),
            psnr_r: psnr_from_mse(m[0], max_val),
            psnr_g: psnr_from_mse(m[1], max_val),
            psnr_b: psnr_from_mse(m[2], max_val),
            cpsnr: psnr_from_mse(mean, max_val),
            mse: mean,
            pixels: d.n * (d.h - 2 * border) * (d.w - 2 * border),
            border_crop: border,
        })
    }

    /// Arithmetic mean of every field over `reports` (dB values averaged in dB).
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricReport {
            name: "MEAN".into(),
            psnr_r: avg(|r| r.psnr_r),
            psnr_g: avg(|r| r.psnr_g),
            psnr_b: avg(|r| r.psnr_b),
            cpsnr: avg(|r| r.cpsnr),
            mse: avg(|r| r.mse),
            pixels: reports.iter().map(|r| r.pixels).sum(),
            border_crop: first.border_crop,
        })
    }
}

/// Per-image reports, files that could not be processed, and the mean.
#[derive(Clone, Debug, Default)]
pub struct EvaluationReport {
    pub images: Vec<MetricReport>,
    pub skipped: Vec<(String, String)>,
}

impl EvaluationReport {
    pub fn aggregate(&self) -> Option<MetricReport> {
        MetricReport::mean(&self.images)
    }

    /// CSV with a header, one row per image (skipped files have empty metric
    /// fields), and a final `MEAN` row when any image was evaluated.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["filename", "psnr_r", "psnr_g", "psnr_b", "cpsnr", "mse"])?;
        let mut rows: Vec<(&str, Option<&MetricReport>)> = self
            .images
            .iter()
            .map(|r| (r.name.as_str(), Some(r)))
            .chain(self.skipped.iter().map(|(n, _)| (n.as_str(), None)))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        for (name, r) in rows {
            match r {
                Some(r) => w.write_record(report_fields(r))?,
                None => w.write_record([name, "", "", "", "", ""])?,
            }
        }
        if let Some(mean) = self.aggregate() {
            w.write_record(report_fields(&mean))?;
        }
        w.flush().map_err(|e| Error::io("csv report", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

pub fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

pub fn report_fields(r: &MetricReport) -> [String; 6] {
    [
        r.name.clone(),
        format_db(r.psnr_r),
        format_db(r.psnr_g),
        format_db(r.psnr_b),
        format_db(r.cpsnr),
        format!("{:.6}", r.mse),
    ]
}
