//! Binary PGM (P5) and PPM (P6) with maxval 255. `#` comments are accepted
//! anywhere in the header.

use std::path::Path;

use craft_core::features::Image;

use super::{at, read_file, write_file};
use crate::error::{FormatError, Result};

pub fn encode(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.samples());
    out
}

struct Header<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b'#' => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &'static str) -> Result<usize, FormatError> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            if self.pos == self.buf.len() {
                return Err(FormatError::Truncated { offset: self.pos, needed: 1, what });
            }
            return Err(FormatError::Invalid { offset: start, what, detail: "expected a decimal number".into() });
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|e: std::num::ParseIntError| FormatError::Invalid { offset: start, what, detail: e.to_string() })
    }
}

pub fn decode(bytes: &[u8]) -> Result<Image, FormatError> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(FormatError::BadMagic { expected: "P5 or P6" }),
    };
    let mut h = Header { buf: bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval_at = h.pos;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(FormatError::Invalid { offset: maxval_at, what: "maxval", detail: format!("{maxval}, only 255 is supported") });
    }
    match bytes.get(h.pos) {
        Some(c) if c.is_ascii_whitespace() => h.pos += 1,
        Some(_) => return Err(FormatError::Invalid { offset: h.pos, what: "header", detail: "missing separator".into() }),
        None => return Err(FormatError::Truncated { offset: h.pos, needed: 1, what: "header" }),
    }
    let n = width.saturating_mul(height).saturating_mul(channels);
    let rest = &bytes[h.pos..];
    if rest.len() < n {
        return Err(FormatError::Truncated { offset: bytes.len(), needed: n - rest.len(), what: "samples" });
    }
    if rest.len() > n {
        return Err(FormatError::Invalid {
            offset: h.pos + n,
            what: "trailing data",
            detail: format!("{} unexpected bytes", rest.len() - n),
        });
    }
    Image::new(width, height, channels, rest.to_vec())
        .map_err(|e| FormatError::Invalid { offset: 2, what: "dimension", detail: e.to_string() })
}

pub fn save(img: &Image, path: &Path) -> Result<()> {
    write_file(path, &encode(img))
}

pub fn load(path: &Path) -> Result<Image> {
    decode(&read_file(path)?).map_err(at(path))
}
