//! Binary PGM (P5) encoding for label rasters (16-bit) and masks (8-bit).

use std::io;

#[derive(Debug, thiserror::Error)]
pub enum PgmError {
    #[error("not a binary PGM (missing P5 magic)")]
    BadMagic,
    #[error("malformed PGM header: {0}")]
    BadHeader(&'static str),
    #[error("PGM payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("unsupported PGM maxval {0}")]
    UnsupportedMaxval(u32),
}

impl From<PgmError> for io::Error {
    fn from(e: PgmError) -> Self {
        io::Error::new(io::ErrorKind::InvalidData, e)
    }
}

/// Decoded PGM image; samples are widened to `u16` regardless of depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: u32,
    pub height: u32,
    pub maxval: u32,
    pub samples: Vec<u16>,
}

pub fn encode_u8(width: u32, height: u32, samples: &[u8]) -> Vec<u8> {
    debug_assert_eq!(samples.len(), width as usize * height as usize);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(samples);
    out
}

/// 16-bit samples are stored most significant byte first.
pub fn encode_u16(width: u32, height: u32, samples: &[u16]) -> Vec<u8> {
    debug_assert_eq!(samples.len(), width as usize * height as usize);
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(samples.len() * 2);
    for s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Pgm, PgmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(PgmError::BadMagic);
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(PgmError::BadHeader("header ends early")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(PgmError::BadHeader("expected a decimal field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PgmError::BadHeader("numeric field out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(PgmError::BadHeader("missing separator before payload")),
    }
    let [width, height, maxval] = fields;
    let n = width as usize * height as usize;
    let data = &bytes[pos..];
    let samples = match maxval {
        1..=255 => {
            if data.len() < n {
                return Err(PgmError::Truncated { expected: n, found: data.len() });
            }
            data[..n].iter().map(|&b| u16::from(b)).collect()
        }
        256..=65535 => {
            if data.len() < 2 * n {
                return Err(PgmError::Truncated { expected: 2 * n, found: data.len() });
            }
            data[..2 * n]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        }
        other => return Err(PgmError::UnsupportedMaxval(other)),
    };
    Ok(Pgm { width, height, maxval, samples })
}

/// 8-bit mask file, 255 where set.
pub fn encode_mask(mask: &super::ChangeMask) -> Vec<u8> {
    encode_u8(mask.width, mask.height, &mask.to_u8())
}

/// Any nonzero sample counts as set.
pub fn decode_mask(image_id: &str, bytes: &[u8]) -> Result<super::ChangeMask, PgmError> {
    let p = decode(bytes)?;
    Ok(super::ChangeMask {
        image_id: image_id.to_string(),
        width: p.width,
        height: p.height,
        bits: p.samples.iter().map(|&v| v != 0).collect(),
    })
}
