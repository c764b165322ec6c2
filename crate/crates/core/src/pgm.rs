//! Netpbm graymap I/O (binary `P5` and ASCII `P2`).
//!
//! Samples are mapped to `[0, 1]` by dividing by `maxval`. Writing clamps to
//! `[0, 1]` and rounds to the nearest level, so integer grids round-trip
//! exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    Binary,
    Ascii,
}

pub fn quantize(v: f64, maxval: u16) -> u16 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * maxval as f64).round() as u16
}

pub fn encode(img: &Tensor, format: PgmFormat, maxval: u16) -> Result<Vec<u8>> {
    if maxval == 0 {
        return Err(Error::config("PGM maxval must be positive"));
    }
    let (rows, cols) = img.shape();
    let magic = match format {
        PgmFormat::Binary => "P5",
        PgmFormat::Ascii => "P2",
    };
    let mut out = format!("{magic}\n{cols} {rows}\n{maxval}\n").into_bytes();
    let levels = img.as_slice().iter().map(|&v| quantize(v, maxval));
    match format {
        PgmFormat::Binary => {
            for q in levels {
                if maxval < 256 {
                    out.push(q as u8);
                } else {
                    out.extend_from_slice(&q.to_be_bytes());
                }
            }
        }
        PgmFormat::Ascii => {
            for (k, q) in levels.enumerate() {
                out.extend_from_slice(q.to_string().as_bytes());
                out.push(if (k + 1) % cols == 0 { b'\n' } else { b' ' });
            }
        }
    }
    Ok(out)
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&str> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::Parse("non-ASCII PGM header".into()))
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        t.parse()
            .map_err(|_| Error::Parse(format!("bad PGM number {t:?}")))
    }
}

/// Returns the image and its `maxval`.
pub fn decode(bytes: &[u8]) -> Result<(Tensor, u16)> {
    let mut h = Header { bytes, pos: 0 };
    let format = match h.token()? {
        "P5" => PgmFormat::Binary,
        "P2" => PgmFormat::Ascii,
        other => return Err(Error::Parse(format!("unsupported magic {other:?}"))),
    };
    let cols = h.number()?;
    let rows = h.number()?;
    let maxval = h.number()?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("maxval {maxval} out of range")));
    }
    let n = rows * cols;
    let mv = maxval as f64;
    let mut data = Vec::with_capacity(n);
    match format {
        PgmFormat::Binary => {
            // exactly one whitespace byte separates the header from the raster
            let start = h.pos + 1;
            let width = if maxval < 256 { 1 } else { 2 };
            let raster = bytes
                .get(start..start + n * width)
                .ok_or_else(|| Error::Parse("truncated PGM raster".into()))?;
            for chunk in raster.chunks(width) {
                let q = if width == 1 {
                    chunk[0] as usize
                } else {
                    u16::from_be_bytes([chunk[0], chunk[1]]) as usize
                };
                if q > maxval {
                    return Err(Error::Parse(format!("sample {q} exceeds maxval")));
                }
                data.push(q as f64 / mv);
            }
        }
        PgmFormat::Ascii => {
            for _ in 0..n {
                let q = h.number()?;
                if q > maxval {
                    return Err(Error::Parse(format!("sample {q} exceeds maxval")));
                }
                data.push(q as f64 / mv);
            }
        }
    }
    Ok((Tensor::from_vec(rows, cols, data)?, maxval as u16))
}

pub fn read(path: impl AsRef<Path>) -> Result<(Tensor, u16)> {
    decode(&fs::read(path)?)
}

pub fn write(path: impl AsRef<Path>, img: &Tensor, format: PgmFormat, maxval: u16) -> Result<()> {
    fs::write(path, encode(img, format, maxval)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(maxval: u16) -> Tensor {
        Tensor::from_fn(5, 7, |i, j| ((i * 7 + j) * 37 % (maxval as usize + 1)) as f64 / maxval as f64)
    }

    #[test]
    fn roundtrip_all_formats() {
        for maxval in [255u16, 65535] {
            for format in [PgmFormat::Binary, PgmFormat::Ascii] {
                let img = grid(maxval);
                let bytes = encode(&img, format, maxval).unwrap();
                let (back, mv) = decode(&bytes).unwrap();
                assert_eq!(mv, maxval);
                assert_eq!(back, img);
                assert_eq!(encode(&back, format, maxval).unwrap(), bytes);
            }
        }
    }

    #[test]
    fn clamps_out_of_range() {
        let img = Tensor::vector(vec![-0.5, 1.5, f64::NAN]).reshape(1, 3).unwrap();
        let (back, _) = decode(&encode(&img, PgmFormat::Binary, 255).unwrap()).unwrap();
        assert_eq!(back.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn header_comments_and_errors() {
        let (img, _) = decode(b"P2\n# comment\n2 1\n# more\n4\n0 4\n").unwrap();
        assert_eq!(img.as_slice(), &[0.0, 1.0]);
        assert!(decode(b"P6\n1 1\n255\n\0\0\0").is_err());
        assert!(decode(b"P5\n2 2\n255\n\0").is_err());
        assert!(decode(b"P2\n1 1\n4\n9\n").is_err());
    }
}
