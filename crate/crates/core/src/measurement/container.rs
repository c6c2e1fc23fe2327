//! Little-endian binary container for complex arrays: a 4-byte magic,
//! `u32` rows, `u32` cols, then interleaved `f64` (re, im) pairs, row-major.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub const MAGIC_MASK: &[u8; 4] = b"CPRM";
pub const MAGIC_DICTIONARY: &[u8; 4] = b"CPRD";

const HEADER_LEN: usize = 12;

pub fn encode(magic: &[u8; 4], rows: usize, cols: usize, data: &[C64]) -> Result<Vec<u8>> {
    if data.len() != rows * cols {
        return Err(Error::Dimension {
            what: "container payload",
            expected: rows * cols,
            got: data.len(),
        });
    }
    let rows32 = u32::try_from(rows).map_err(|_| Error::InvalidParameter("rows exceed u32".into()))?;
    let cols32 = u32::try_from(cols).map_err(|_| Error::InvalidParameter("cols exceed u32".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * data.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&rows32.to_le_bytes());
    out.extend_from_slice(&cols32.to_le_bytes());
    for z in data {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], magic: &[u8; 4]) -> Result<(usize, usize, Vec<C64>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format {
            offset: bytes.len(),
            msg: "truncated header".into(),
        });
    }
    if &bytes[..4] != magic {
        return Err(Error::Format {
            offset: 0,
            msg: format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[..4]),
                String::from_utf8_lossy(magic)
            ),
        });
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = HEADER_LEN + 16 * rows * cols;
    if bytes.len() != expected {
        return Err(Error::Format {
            offset: bytes.len().min(expected),
            msg: format!("payload length {} does not match {rows}x{cols}", bytes.len() - HEADER_LEN),
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok((rows, cols, data))
}

pub fn write_file(path: &Path, magic: &[u8; 4], rows: usize, cols: usize, data: &[C64]) -> Result<()> {
    let bytes = encode(magic, rows, cols, data)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn read_file(path: &Path, magic: &[u8; 4]) -> Result<(usize, usize, Vec<C64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes, magic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let bytes = encode(MAGIC_MASK, 1, 2, &[C64::new(1.0, -1.0), C64::new(0.5, 2.0)]).unwrap();
        assert_eq!(&bytes[..4], b"CPRM");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[20..28], &(-1.0f64).to_le_bytes());
        assert_eq!(bytes.len(), 12 + 32);
    }

    #[test]
    fn decode_errors_carry_offsets() {
        assert!(matches!(decode(b"CPR", MAGIC_MASK), Err(Error::Format { offset: 3, .. })));
        let good = encode(MAGIC_DICTIONARY, 1, 1, &[C64::new(0.0, 0.0)]).unwrap();
        assert!(matches!(decode(&good, MAGIC_MASK), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(
            decode(&good[..20], MAGIC_DICTIONARY),
            Err(Error::Format { offset: 20, .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            rows in 1usize..5,
            cols in 1usize..5,
            seed in proptest::collection::vec(any::<(u64, u64)>(), 16)
        ) {
            let data: Vec<C64> = seed
                .iter()
                .take(rows * cols)
                .map(|&(a, b)| C64::new(f64::from_bits(a >> 2), -f64::from_bits(b >> 2)))
                .collect();
            let bytes = encode(MAGIC_MASK, rows, cols, &data).unwrap();
            let (r, c, back) = decode(&bytes, MAGIC_MASK).unwrap();
            prop_assert_eq!((r, c), (rows, cols));
            for (x, y) in data.iter().zip(&back) {
                prop_assert_eq!(x.re.to_bits(), y.re.to_bits());
                prop_assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
    }
}
