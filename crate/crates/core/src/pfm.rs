//! Portable float map (PFM) reader and writer.
//!
//! Layout: `PF\n<width> <height>\n<scale>\n` followed by `f32` RGB rows from
//! bottom to top. A negative scale marks little-endian data. `Pf`
//! (grayscale) files are read with the single channel replicated.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Dims, Tensor4D};

fn header_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)
            .map_err(|e| Error::Format(e.to_string()))?
            == 0
        {
            return Err(Error::Truncated("PFM header".into()));
        }
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(byte[0]);
        if tok.len() > 64 {
            return Err(Error::Format("PFM header token too long".into()));
        }
    }
    String::from_utf8(tok).map_err(|_| Error::Format("PFM header is not ASCII".into()))
}

pub fn read_pfm_from<R: Read>(reader: R) -> Result<Tensor4D> {
    let mut r = BufReader::new(reader);
    let magic = header_token(&mut r)?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::Format(format!("not a PFM file (magic `{other}`)"))),
    };
    let parse = |s: String, what: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Format(format!("PFM {what} `{s}` is not a number")))
    };
    let w = parse(header_token(&mut r)?, "width")? as usize;
    let h = parse(header_token(&mut r)?, "height")? as usize;
    let scale = parse(header_token(&mut r)?, "scale")?;
    if w == 0 || h == 0 || scale == 0.0 {
        return Err(Error::Format(format!("PFM header {w}x{h} scale {scale}")));
    }
    let little = scale < 0.0;
    let mut raw = vec![0u8; w * h * channels * 4];
    r.read_exact(&mut raw)
        .map_err(|_| Error::Truncated(format!("PFM data for {w}x{h}x{channels}")))?;
    let mut out = Tensor4D::zeros(Dims::new(1, 3, h, w));
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        } as f64;
        let ch = i % channels;
        let px = i / channels;
        let (row, x) = (px / w, px % w);
        let y = h - 1 - row;
        if channels == 1 {
            for c in 0..3 {
                out.set(0, c, y, x, v);
            }
        } else {
            out.set(0, ch, y, x, v);
        }
    }
    Ok(out)
}

pub fn read_pfm(path: &Path) -> Result<Tensor4D> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_pfm_from(file)
}

/// Writes sample 0 of a 3-channel tensor as little-endian `PF`.
pub fn write_pfm_to<W: Write>(mut writer: W, image: &Tensor4D) -> std::io::Result<()> {
    let d = image.dims();
    assert_eq!(d.c, 3, "PFM writer needs 3 channels");
    write!(writer, "PF\n{} {}\n-1.0\n", d.w, d.h)?;
    let mut buf = Vec::with_capacity(d.plane() * 12);
    for y in (0..d.h).rev() {
        for x in 0..d.w {
            for c in 0..3 {
                buf.extend_from_slice(&(image.get(0, c, y, x) as f32).to_le_bytes());
            }
        }
    }
    writer.write_all(&buf)
}

pub fn write_pfm(path: &Path, image: &Tensor4D) -> Result<()> {
    if image.dims().c != 3 {
        return Err(Error::shape("write_pfm", image.dims(), "3 channels"));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_pfm_to(&mut w, image)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
