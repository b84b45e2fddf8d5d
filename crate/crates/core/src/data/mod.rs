//! Images, augmentation, and training patches.

mod augment;
mod image_io;
mod patches;
mod synthetic;

use std::path::{Path, PathBuf};

use log::warn;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use augment::{augment, AugmentOp};
pub use image_io::{decode_image, load_image, save_image, to_rgb8};
pub use patches::{
    add_sample_noise, collate, extract_patches, Batcher, PatchPair, PatchSampler, Sampling,
};
pub use synthetic::{noise_image, synthetic_scene};

pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "ppm", "pfm"];

/// Image files in `dir` (by extension), sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    out.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if out.is_empty() {
        warn!("no images found in {}", dir.display());
    }
    Ok(out)
}

/// Deterministic validation membership: about 5% of file names, chosen by
/// a SHA-256 hash of the name.
pub fn is_validation(file_name: &str) -> bool {
    let digest = Sha256::digest(file_name.as_bytes());
    u16::from_le_bytes([digest[0], digest[1]]) % 100 < 5
}

/// Train/validation split from an optional manifest of `train <name>` /
/// `val <name>` lines, falling back to [`is_validation`].
pub fn split_names(names: &[String], manifest: Option<&str>) -> Result<(Vec<String>, Vec<String>)> {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    match manifest {
        Some(text) => {
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (kind, name) = line
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| Error::Format(format!("manifest line {}: `{line}`", i + 1)))?;
                let name = name.trim().to_string();
                match kind {
                    "train" => train.push(name),
                    "val" => val.push(name),
                    _ => {
                        return Err(Error::Format(format!(
                            "manifest line {}: expected `train` or `val`, got `{kind}`",
                            i + 1
                        )))
                    }
                }
            }
        }
        None => {
            for n in names {
                if is_validation(n) {
                    val.push(n.clone());
                } else {
                    train.push(n.clone());
                }
            }
        }
    }
    Ok((train, val))
}
