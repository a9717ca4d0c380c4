//! Binary PPM (P6) reading and writing, plus P5 output for single planes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pfm::RgbImage;

/// Header tokenizer that skips whitespace and `#` comments.
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

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Parse(format!("PPM header: expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("PPM header: {what} out of range")))
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(Error::Parse("not a binary PPM (missing P6 magic)".into()));
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Parse(format!(
            "unsupported PPM depth: maxval {maxval} (only 255 is supported)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Parse("PPM with zero dimension".into()));
    }
    match bytes.get(h.pos) {
        Some(c) if c.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(Error::Parse("PPM header not terminated by whitespace".into())),
    }
    let need = 3 * width * height;
    let payload = &bytes[h.pos..];
    if payload.len() < need {
        return Err(Error::Parse(format!(
            "truncated PPM payload: need {need} bytes, found {}",
            payload.len()
        )));
    }
    RgbImage::new(width, height, payload[..need].to_vec())
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

/// Grayscale P5 encoding of `width × height` bytes.
pub fn encode_pgm(width: usize, height: usize, gray: &[u8]) -> Result<Vec<u8>> {
    if gray.len() != width * height {
        return Err(Error::dim("PGM payload does not match dimensions"));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    Ok(out)
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<()> {
    fs::write(path, encode_ppm(image)).map_err(|e| Error::io(path, e))
}
