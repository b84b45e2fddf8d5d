//! Subcommand options, shared between flags and the TOML config file.
//!
//! Every option can be given as `--some-flag` or as `some-flag = ...` in the
//! subcommand's table of the config file; flags win. The merged options are
//! written next to each command's outputs.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::commands::Context;
use crate::CliError;

/// File name of the effective configuration written into output directories.
pub const CONFIG_ECHO: &str = "config.toml";

const TOP_LEVEL_KEYS: [&str; 2] = ["seed", "threads"];
const SECTIONS: [&str; 7] = [
    "mosaic",
    "demosaic",
    "train",
    "evaluate",
    "design-pattern",
    "svec-simulate",
    "svec-reconstruct",
];

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MosaicArgs {
    /// RGB image (PNG or binary PPM).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Builtin pattern name (`name@dy,dx` shifts its phase) or pattern file [default: bayer].
    #[arg(long)]
    pub pattern: Option<String>,
    /// Mosaic file to write.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Optional PNG/PPM showing each sample in its filter color.
    #[arg(long)]
    pub preview: Option<PathBuf>,
    /// Gaussian noise added to the samples, in [0, 1] units [default: 0].
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DemosaicArgs {
    /// Mosaic file (.cfm) or RGB image to sample first.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Weight file; not needed with --baseline-only.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Pattern for image inputs; checked against the file for mosaic inputs.
    #[arg(long)]
    pub pattern: Option<String>,
    /// Output image (PNG, PPM, or PFM).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Ground-truth image; prints a CSV metric line when given.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Use the interpolation baseline instead of a network.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub baseline_only: bool,
    /// Pixels ignored on each side when scoring [default: 0].
    #[arg(long)]
    pub border: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainArgs {
    /// Output directory for checkpoints, log, and final weights.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory of training images; synthetic scenes are used when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Manifest of `train <file>` / `val <file>` lines.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Number of synthetic scenes when no data directory is given [default: 8].
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Side of the synthetic scenes [default: 128].
    #[arg(long)]
    pub synthetic_size: Option<usize>,
    /// dmcnn, dmcnn-vd, svec-dmcnn, or svec-vd [default: dmcnn-vd].
    #[arg(long)]
    pub arch: Option<String>,
    /// Builtin pattern name (`name@dy,dx` shifts its phase) or pattern file [default: bayer].
    #[arg(long)]
    pub pattern: Option<String>,
    /// Learned pattern tile as ROWSxCOLS (design-pattern) [default: 3x3].
    #[arg(long)]
    pub tile: Option<String>,
    /// Convolution layers of DMCNN-VD [default: 20].
    #[arg(long)]
    pub depth: Option<usize>,
    /// Feature maps per hidden layer of DMCNN-VD [default: 64].
    #[arg(long)]
    pub width: Option<usize>,
    /// Multiplier on the MSRA standard deviation sqrt(2 / fan_in) [default: 0.001].
    #[arg(long)]
    pub msra_factor: Option<f64>,
    /// Treat --msra-factor as the absolute standard deviation.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub msra_absolute: bool,
    /// Training iterations [default: 1000].
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Patches per minibatch [default: 64].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Base learning rate [default: 1e-4].
    #[arg(long)]
    pub lr: Option<f64>,
    /// adam or sgd [default: adam].
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Global gradient-norm clip for sgd [default: 1].
    #[arg(long)]
    pub clip: Option<f64>,
    /// Patch side [default: 33 for dmcnn, 64 otherwise].
    #[arg(long)]
    pub patch_size: Option<usize>,
    /// Grid stride between patches; random positions when absent.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Random patches per image when no stride is given [default: 100].
    #[arg(long)]
    pub patches_per_image: Option<usize>,
    /// Random 90-degree rotations and flips.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub augment: bool,
    /// Gaussian noise on training mosaics, in [0, 1] units [default: 0].
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Start from these weights (fine-tuning).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub resume: bool,
    /// Checkpoint interval in iterations; 0 saves only at the end [default: 500].
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Validation interval in iterations; 0 disables [default: 100].
    #[arg(long)]
    pub validate_every: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EvaluateArgs {
    /// Directory of test images.
    #[arg(long)]
    pub dir: Option<PathBuf>,
    /// Weight file; not needed with --baseline-only.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Builtin pattern name (`name@dy,dx` shifts its phase) or pattern file; not needed for learned patterns.
    #[arg(long)]
    pub pattern: Option<String>,
    /// Use the interpolation baseline instead of a network.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub baseline_only: bool,
    /// Pixels ignored on each side [default: 0].
    #[arg(long)]
    pub border: Option<usize>,
    /// CSV report path; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SvecSimulateArgs {
    /// Radiance map (PFM, or a linear PNG/PPM).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Mosaic file to write.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Optional PNG/PPM preview of the exposure-compensated samples.
    #[arg(long)]
    pub preview: Option<PathBuf>,
    /// Optional PFM of the normalized radiance (the reconstruction target).
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SvecReconstructArgs {
    /// SVEC mosaic file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Weight file; not needed with --baseline-only.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Output PFM of normalized radiance.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Normalized radiance PFM from `svec-simulate --truth-out`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Use the least-squares baseline instead of a network.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub baseline_only: bool,
    /// Pixels ignored on each side when scoring [default: 0].
    #[arg(long)]
    pub border: Option<usize>,
}

pub(crate) fn load_config(path: Option<&Path>) -> Result<toml::Table, CliError> {
    let Some(path) = path else {
        return Ok(toml::Table::new());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    for (key, value) in &table {
        let known = TOP_LEVEL_KEYS.contains(&key.as_str())
            || (SECTIONS.contains(&key.as_str()) && value.is_table());
        if !known {
            return Err(CliError::Usage(format!(
                "{}: unknown key `{key}` (expected seed, threads, or a subcommand table)",
                path.display()
            )));
        }
    }
    Ok(table)
}

pub(crate) fn top_level<T: DeserializeOwned>(
    file: &toml::Table,
    key: &str,
) -> Result<Option<T>, CliError> {
    file.get(key)
        .map(|v| {
            v.clone()
                .try_into()
                .map_err(|e| CliError::Usage(format!("config `{key}`: {e}")))
        })
        .transpose()
}

/// Flags over config-file values.
pub(crate) fn merge<T: Serialize + DeserializeOwned>(
    flags: &T,
    file: &toml::Table,
    section: &str,
) -> Result<T, CliError> {
    let mut merged = match file.get(section) {
        Some(toml::Value::Table(t)) => t.clone(),
        _ => toml::Table::new(),
    };
    let over = toml::Table::try_from(flags).map_err(|e| CliError::Usage(e.to_string()))?;
    merged.extend(over);
    toml::Value::Table(merged)
        .try_into()
        .map_err(|e| CliError::Usage(format!("[{section}]: {e}")))
}

/// The effective configuration of one command as a config file.
pub(crate) fn effective_config<T: Serialize>(ctx: &Context, section: &str, args: &T) -> String {
    let mut top = toml::Table::new();
    top.insert("seed".into(), toml::Value::Integer(ctx.seed as i64));
    top.insert("threads".into(), toml::Value::Integer(ctx.threads as i64));
    let body = toml::Table::try_from(args).expect("options serialize to TOML");
    top.insert(section.into(), toml::Value::Table(body));
    toml::to_string(&top).expect("TOML table serializes")
}

pub(crate) fn required<'a, T>(
    v: &'a Option<T>,
    flag: &str,
    section: &str,
) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| {
        CliError::Usage(format!(
            "missing --{flag} (or `{flag}` in the [{section}] config table)"
        ))
    })
}
