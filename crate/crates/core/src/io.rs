//! File formats: 16-bit PGM images and PAF1 channel data.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Binary PGM (P5) with maxval 65535, big-endian samples, row 0 first.
/// Values are scaled so `scale` maps to 65535; negatives clamp to 0.
pub fn write_pgm16<W: Write>(
    mut w: W,
    nx: usize,
    ny: usize,
    values: &[f64],
    scale: f64,
) -> std::io::Result<()> {
    assert_eq!(values.len(), nx * ny, "pgm size mismatch");
    write!(w, "P5\n{nx} {ny}\n65535\n")?;
    let k = if scale > 0.0 { 65535.0 / scale } else { 0.0 };
    let mut buf = Vec::with_capacity(values.len() * 2);
    for v in values {
        let q = (v * k).round().clamp(0.0, 65535.0) as u16;
        buf.extend_from_slice(&q.to_be_bytes());
    }
    w.write_all(&buf)?;
    w.flush()
}

/// Parse a 16-bit P5 PGM, returning `(nx, ny, samples)`.
pub fn read_pgm16<R: Read>(mut r: R) -> Result<(usize, usize, Vec<u16>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let token = |pos: &mut usize| -> Result<String> {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::Format {
                offset: start as u64,
                msg: "truncated PGM header".into(),
            });
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = token(&mut pos)?;
    if magic != "P5" {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad PGM magic {magic:?}"),
        });
    }
    let num = |pos: &mut usize| -> Result<usize> {
        let at = *pos;
        token(pos)?.parse().map_err(|_| Error::Format {
            offset: at as u64,
            msg: "bad PGM header field".into(),
        })
    };
    let nx = num(&mut pos)?;
    let ny = num(&mut pos)?;
    let maxval = num(&mut pos)?;
    if maxval != 65535 {
        return Err(Error::Format {
            offset: pos as u64,
            msg: format!("expected maxval 65535, got {maxval}"),
        });
    }
    pos += 1;
    let need = nx * ny * 2;
    if bytes.len() < pos + need {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            msg: format!("PGM data truncated: need {need} bytes after offset {pos}"),
        });
    }
    let data = bytes[pos..pos + need]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((nx, ny, data))
}
