//! Netpbm grayscale (P2 ascii, P5 binary) with 8- or 16-bit samples.

use std::path::Path;

use dlpr::Error;

/// Decoded image: samples divided by maxval, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Gray {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, Error> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Format {
                offset: start,
                msg: format!("{what} out of range"),
            })
    }
}

pub fn decode(bytes: &[u8]) -> Result<Gray, Error> {
    let mut c = Cursor { bytes, pos: 0 };
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(c.err("not a P2/P5 graymap")),
    };
    c.pos = 2;
    let cols = c.number("width")?;
    let rows = c.number("height")?;
    let maxval = c.number("maxval")?;
    if cols == 0 || rows == 0 {
        return Err(c.err("empty image"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(c.err(format!("maxval {maxval} outside 1..=65535")));
    }
    let n = rows.checked_mul(cols).ok_or_else(|| c.err("image too large"))?;
    let scale = maxval as f64;
    let mut values = Vec::with_capacity(n);
    if binary {
        match bytes.get(c.pos) {
            Some(b) if b.is_ascii_whitespace() => c.pos += 1,
            _ => return Err(c.err("expected one whitespace byte before raster")),
        }
        let width = if maxval < 256 { 1 } else { 2 };
        let need = n * width;
        if bytes.len() - c.pos < need {
            return Err(Error::Format {
                offset: bytes.len(),
                msg: format!("raster truncated: need {need} bytes after offset {}", c.pos),
            });
        }
        for (k, chunk) in bytes[c.pos..c.pos + need].chunks_exact(width).enumerate() {
            let v = if width == 1 {
                chunk[0] as usize
            } else {
                u16::from_be_bytes([chunk[0], chunk[1]]) as usize
            };
            if v > maxval {
                return Err(Error::Format {
                    offset: c.pos + k * width,
                    msg: format!("sample {v} exceeds maxval {maxval}"),
                });
            }
            values.push(v as f64 / scale);
        }
    } else {
        for _ in 0..n {
            c.skip_space();
            let at = c.pos;
            let v = c.number("sample")?;
            if v > maxval {
                return Err(Error::Format {
                    offset: at,
                    msg: format!("sample {v} exceeds maxval {maxval}"),
                });
            }
            values.push(v as f64 / scale);
        }
    }
    Ok(Gray { rows, cols, values })
}

/// 16-bit binary graymap; values are clamped to `[0, 1]`.
pub fn encode16(rows: usize, cols: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(rows * cols, values.len());
    let mut out = format!("P5\n{cols} {rows}\n65535\n").into_bytes();
    for v in values {
        let s = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn read(path: &Path) -> Result<Gray, Error> {
    decode(&std::fs::read(path)?)
}

/// Affine map of `values` onto `[0, 1]` (constant input maps to 0).
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}
