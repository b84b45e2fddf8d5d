//! Patch extraction with CFA-phase-aligned offsets, augmentation, noise, and
//! seeded minibatch ordering.

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cfa::{mosaic, CfaPattern, PlaneStack};
use crate::error::{Error, Result};
use crate::layers::init::seeded_rng;
use crate::svec::{from_unit, svec_mosaic, svec_pattern, SvecConfig};
use crate::tensor::Tensor4D;

use super::augment::{augment, AugmentOp};

/// How ground truth becomes network input.
#[derive(Clone, Debug, PartialEq)]
pub enum Sampling {
    Cfa(CfaPattern),
    /// Ground truth in `[0, 1]` is normalized radiance divided by `r_max`.
    Svec(SvecConfig),
    /// The model samples the patch itself (learned pattern).
    Learned {
        tile_h: usize,
        tile_w: usize,
    },
}

impl Sampling {
    pub fn tile(&self) -> (usize, usize) {
        match self {
            Sampling::Cfa(p) => (p.tile_h, p.tile_w),
            Sampling::Svec(_) => (4, 4),
            Sampling::Learned { tile_h, tile_w } => (*tile_h, *tile_w),
        }
    }

    /// The pattern whose plane layout the mosaics follow.
    pub fn pattern(&self) -> Option<CfaPattern> {
        match self {
            Sampling::Cfa(p) => Some(p.clone()),
            Sampling::Svec(cfg) => Some(svec_pattern(cfg)),
            Sampling::Learned { .. } => None,
        }
    }

    /// Mosaic of a ground-truth batch, without noise.
    pub fn sample(&self, truth: &Tensor4D) -> Result<Option<PlaneStack>> {
        match self {
            Sampling::Cfa(p) => mosaic(truth, p).map(Some),
            Sampling::Svec(cfg) => svec_mosaic(&from_unit(truth, cfg), cfg).map(Some),
            Sampling::Learned { .. } => Ok(None),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchSampler {
    pub patch_size: usize,
    /// Grid stride; offsets are snapped down to multiples of the tile.
    pub stride: Option<usize>,
    /// Random phase-aligned positions per image; used when `stride` is `None`.
    pub per_image: usize,
    pub seed: u64,
    pub rotations: bool,
    pub flips: bool,
    /// Additive Gaussian noise on mosaic samples, in `[0, 1]` units.
    pub noise_sigma: f64,
}

impl Default for PatchSampler {
    fn default() -> Self {
        PatchSampler {
            patch_size: 33,
            stride: None,
            per_image: 100,
            seed: 0,
            rotations: false,
            flips: false,
            noise_sigma: 0.0,
        }
    }
}

impl PatchSampler {
    fn ops(&self) -> Vec<AugmentOp> {
        let mut ops = vec![AugmentOp::Identity];
        if self.rotations {
            ops.extend([AugmentOp::Rot90, AugmentOp::Rot180, AugmentOp::Rot270]);
        }
        if self.flips {
            ops.extend([AugmentOp::FlipH, AugmentOp::FlipV]);
        }
        ops
    }
}

/// One training example.
#[derive(Clone, Debug)]
pub struct PatchPair {
    pub truth: Tensor4D,
    /// `None` for learned-pattern training.
    pub input: Option<PlaneStack>,
    pub image: usize,
    pub y: usize,
    pub x: usize,
    pub op: AugmentOp,
}

fn snap(v: usize, tile: usize) -> usize {
    v / tile * tile
}

/// Extracts patches from every image, shuffled deterministically by `seed`.
/// Images smaller than the patch are skipped with a warning.
pub fn extract_patches(
    images: &[Tensor4D],
    sampler: &PatchSampler,
    sampling: &Sampling,
) -> Result<Vec<PatchPair>> {
    let size = sampler.patch_size;
    if size == 0 {
        return Err(Error::Config("patch size must be positive".into()));
    }
    let (th, tw) = sampling.tile();
    let ops = sampler.ops();
    let mut rng = seeded_rng(sampler.seed);
    let mut out = Vec::new();
    for (idx, img) in images.iter().enumerate() {
        let d = img.dims();
        if d.h < size || d.w < size {
            warn!(
                "image {idx} ({}x{}) is smaller than the {size}px patch; skipped",
                d.h, d.w
            );
            continue;
        }
        let positions: Vec<(usize, usize)> = match sampler.stride {
            Some(stride) => {
                let stride = stride.max(1);
                let ys = (0..).map(|i| i * stride).take_while(|&y| y + size <= d.h);
                let xs: Vec<usize> = (0..)
                    .map(|i| i * stride)
                    .take_while(|&x| x + size <= d.w)
                    .collect();
                ys.flat_map(|y| xs.iter().map(move |&x| (snap(y, th), snap(x, tw))))
                    .collect()
            }
            None => (0..sampler.per_image)
                .map(|_| {
                    let y = rng.random_range(0..=(d.h - size) / th) * th;
                    let x = rng.random_range(0..=(d.w - size) / tw) * tw;
                    (y, x)
                })
                .collect(),
        };
        for (y, x) in positions {
            let op = ops[rng.random_range(0..ops.len())];
            let truth = augment(&img.crop(y, x, size, size)?, op);
            out.push(PatchPair {
                truth,
                input: None,
                image: idx,
                y,
                x,
                op,
            });
        }
    }
    out.shuffle(&mut rng);

    let noise = if sampler.noise_sigma > 0.0 {
        Some(Normal::new(0.0, sampler.noise_sigma).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let mut noise_rng = seeded_rng(sampler.seed ^ 0x6e6f_6973_65);
    for pair in &mut out {
        pair.input = sampling.sample(&pair.truth)?;
        if let (Some(dist), Some(stack)) = (&noise, pair.input.as_mut()) {
            add_noise(stack, dist, &mut noise_rng);
        }
    }
    Ok(out)
}

/// Adds clamped Gaussian noise with standard deviation `sigma` to every
/// sample of `stack`.
pub fn add_sample_noise(stack: &mut PlaneStack, sigma: f64, seed: u64) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let dist = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    add_noise(stack, &dist, &mut seeded_rng(seed));
    Ok(())
}

fn add_noise(stack: &mut PlaneStack, dist: &Normal<f64>, rng: &mut impl Rng) {
    let d = stack.planes.dims();
    for n in 0..d.n {
        for y in 0..d.h {
            for x in 0..d.w {
                let k = stack.mask[y * d.w + x];
                let v = stack.planes.get(n, k, y, x) + dist.sample(rng);
                stack.planes.set(n, k, y, x, v.clamp(0.0, 1.0));
            }
        }
    }
}

/// Seeded epoch-wise permutations over `len` items, addressable by iteration.
#[derive(Clone, Debug)]
pub struct Batcher {
    len: usize,
    batch_size: usize,
    seed: u64,
    epoch: Option<(usize, Vec<usize>)>,
}

impl Batcher {
    pub fn new(len: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if len == 0 || batch_size == 0 {
            return Err(Error::Config(format!(
                "need a non-empty dataset and batch size (got {len} items, batch {batch_size})"
            )));
        }
        Ok(Batcher {
            len,
            batch_size,
            seed,
            epoch: None,
        })
    }

    fn order(&mut self, epoch: usize) -> &[usize] {
        if self.epoch.as_ref().map(|e| e.0) != Some(epoch) {
            let mut idx: Vec<usize> = (0..self.len).collect();
            idx.shuffle(&mut seeded_rng(
                self.seed ^ (epoch as u64 + 1).wrapping_mul(0xA24B_AED4_963E_E407),
            ));
            self.epoch = Some((epoch, idx));
        }
        &self.epoch.as_ref().unwrap().1
    }

    /// Item indices of minibatch `iteration` (0-based).
    pub fn batch(&mut self, iteration: usize) -> Vec<usize> {
        let start = iteration * self.batch_size;
        (start..start + self.batch_size)
            .map(|i| {
                let (epoch, pos) = (i / self.len, i % self.len);
                self.order(epoch)[pos]
            })
            .collect()
    }
}

/// Stacks the truth patches and mosaics of `items` into one batch.
pub fn collate(pairs: &[PatchPair], items: &[usize]) -> Result<(Tensor4D, Option<PlaneStack>)> {
    let truths: Vec<Tensor4D> = items.iter().map(|&i| pairs[i].truth.clone()).collect();
    let truth = Tensor4D::stack(&truths)?;
    let first = &pairs[items[0]];
    let input = match &first.input {
        Some(s0) => {
            let mut planes = Vec::with_capacity(items.len());
            for &i in items {
                let s = pairs[i].input.as_ref().ok_or_else(|| {
                    Error::Config("mixed learned and fixed-pattern patches".into())
                })?;
                if s.mask != s0.mask {
                    return Err(Error::shape("collate", "sample mask", "differing mask"));
                }
                planes.push(s.planes.clone());
            }
            Some(PlaneStack {
                planes: Tensor4D::stack(&planes)?,
                mask: s0.mask.clone(),
            })
        }
        None => None,
    };
    Ok((truth, input))
}
