//! Procedural test scenes: smooth gradients with sharp-edged colored shapes
//! and gratings, the structures where bilinear demosaicing breaks down.

use rand::Rng;

use crate::layers::init::seeded_rng;
use crate::tensor::{Dims, Tensor4D};

pub fn synthetic_scene(h: usize, w: usize, seed: u64) -> Tensor4D {
    let mut rng = seeded_rng(seed);
    let mut color = || {
        [
            rng.random::<f64>(),
            rng.random::<f64>(),
            rng.random::<f64>(),
        ]
    };
    let (c0, c1) = (color(), color());
    let mut img = Tensor4D::from_fn(Dims::new(1, 3, h, w), |_, c, y, x| {
        let t = (y as f64 / h as f64 + x as f64 / w as f64) / 2.0;
        c0[c] * (1.0 - t) + c1[c] * t
    });
    let mut rng = seeded_rng(seed ^ 0x5eed);
    let shapes = 6 + rng.random_range(0..6);
    for _ in 0..shapes {
        let col = [
            rng.random::<f64>(),
            rng.random::<f64>(),
            rng.random::<f64>(),
        ];
        let cy = rng.random_range(0.0..h as f64);
        let cx = rng.random_range(0.0..w as f64);
        let size = rng.random_range(3.0..(h.min(w) as f64 / 2.5).max(4.0));
        let kind = rng.random_range(0..3);
        let freq = rng.random_range(0.3..1.4);
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        for y in 0..h {
            for x in 0..w {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                let inside = match kind {
                    0 => dy.abs() < size / 2.0 && dx.abs() < size,
                    1 => dy * dy + dx * dx < size * size,
                    _ => dy.abs() < size && dx.abs() < size,
                };
                if !inside {
                    continue;
                }
                let alpha = if kind == 2 {
                    let phase = freq * (dx * angle.cos() + dy * angle.sin());
                    0.5 + 0.5 * phase.sin()
                } else {
                    1.0
                };
                for (c, &v) in col.iter().enumerate() {
                    let old = img.get(0, c, y, x);
                    img.set(0, c, y, x, old * (1.0 - alpha) + v * alpha);
                }
            }
        }
    }
    img
}

/// Uniform random pixels in `[0, 1]`.
pub fn noise_image(h: usize, w: usize, seed: u64) -> Tensor4D {
    let mut rng = seeded_rng(seed);
    Tensor4D::from_fn(Dims::new(1, 3, h, w), |_, _, _, _| rng.random::<f64>())
}
