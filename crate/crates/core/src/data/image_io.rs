//! 8-bit RGB image loading and saving (PNG and binary PPM).

use std::path::Path;

use image::{ColorType, DynamicImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::{Dims, Tensor4D};

/// Loads a PNG or binary PPM (P6, maxval 255) as a `1 x 3 x H x W` tensor in `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Tensor4D> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::Truncated(m) => Error::Truncated(format!("{}: {m}", path.display())),
        Error::UnsupportedFormat(m) => Error::UnsupportedFormat(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn decode_image(bytes: &[u8]) -> Result<Tensor4D> {
    if bytes.starts_with(b"P6") {
        return decode_ppm(bytes);
    }
    if bytes.starts_with(b"PF") || bytes.starts_with(b"Pf") {
        return Err(Error::UnsupportedFormat(
            "PFM radiance maps are read by the svec path".into(),
        ));
    }
    if !bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        return Err(Error::UnsupportedFormat(
            "expected PNG or binary PPM (P6)".into(),
        ));
    }
    let img =
        image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| match e {
            image::ImageError::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                Error::Truncated("PNG data".into())
            }
            image::ImageError::Decoding(d) => Error::Truncated(format!("PNG decode failed: {d}")),
            other => Error::Image(other),
        })?;
    let rgb = match img.color() {
        ColorType::L8 | ColorType::La8 | ColorType::Rgb8 | ColorType::Rgba8 => img.to_rgb8(),
        other => {
            return Err(Error::UnsupportedDepth(format!(
                "{other:?}; only 8-bit PNG is supported"
            )))
        }
    };
    Ok(from_rgb8(&rgb))
}

fn decode_ppm(bytes: &[u8]) -> Result<Tensor4D> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Truncated("PPM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if pos == start {
            return Err(Error::Format("PPM header field is not a number".into()));
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("PPM header field overflow".into()))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedDepth(format!(
            "PPM maxval {maxval}; only 8-bit (255) is supported"
        )));
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::Truncated("PPM header".into()));
    }
    pos += 1;
    let need = w * h * 3;
    let data = &bytes[pos.min(bytes.len())..];
    if data.len() < need {
        return Err(Error::Truncated(format!(
            "PPM {w}x{h} needs {need} bytes of pixels, found {}",
            data.len()
        )));
    }
    Ok(Tensor4D::from_fn(Dims::new(1, 3, h, w), |_, c, y, x| {
        data[(y * w + x) * 3 + c] as f64 / 255.0
    }))
}

fn from_rgb8(img: &RgbImage) -> Tensor4D {
    let (w, h) = img.dimensions();
    Tensor4D::from_fn(Dims::new(1, 3, h as usize, w as usize), |_, c, y, x| {
        img.get_pixel(x as u32, y as u32)[c] as f64 / 255.0
    })
}

/// Sample 0 of a 3-channel tensor as 8-bit RGB, clamped to `[0, 1]` and rounded.
pub fn to_rgb8(image: &Tensor4D) -> Result<RgbImage> {
    let d = image.dims();
    if d.c != 3 {
        return Err(Error::shape("to_rgb8", d, "3 channels"));
    }
    Ok(RgbImage::from_fn(d.w as u32, d.h as u32, |x, y| {
        let px =
            |c| (image.get(0, c, y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        image::Rgb([px(0), px(1), px(2)])
    }))
}

/// Writes PNG, or binary PPM for `.ppm` paths.
pub fn save_image(path: &Path, image: &Tensor4D) -> Result<()> {
    let rgb = to_rgb8(image)?;
    let is_ppm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    if is_ppm {
        let mut bytes = format!("P6\n{} {}\n255\n", rgb.width(), rgb.height()).into_bytes();
        bytes.extend_from_slice(rgb.as_raw());
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    } else {
        DynamicImage::ImageRgb8(rgb)
            .save_with_format(path, ImageFormat::Png)
            .map_err(Error::from)
    }
}
