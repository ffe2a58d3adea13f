use crate::error::FormatError;

/// Little-endian reader that reports the offset of whatever goes wrong.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        let remaining = self.buf.len() - self.pos;
        if n > remaining {
            return Err(FormatError::Truncated { offset: self.buf.len(), needed: n - remaining, what });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn magic(&mut self, expected: &'static str) -> Result<(), FormatError> {
        let got = self.take(expected.len(), "magic")?;
        if got != expected.as_bytes() {
            return Err(FormatError::BadMagic { expected });
        }
        Ok(())
    }

    pub fn u8(&mut self, what: &'static str) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn i32(&mut self, what: &'static str) -> Result<i32, FormatError> {
        Ok(i32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn f32(&mut self, what: &'static str) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    /// `n` finite floats.
    pub fn finite_f32s(&mut self, n: usize, what: &'static str) -> Result<Vec<f32>, FormatError> {
        let start = self.pos;
        let bytes = self.take(n.checked_mul(4).ok_or(FormatError::Invalid {
            offset: start,
            what,
            detail: "element count overflows".into(),
        })?, what)?;
        bytes
            .chunks_exact(4)
            .enumerate()
            .map(|(i, c)| {
                let v = f32::from_le_bytes(c.try_into().unwrap());
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(FormatError::NonFinite { offset: start + 4 * i })
                }
            })
            .collect()
    }

    pub fn finish(&self) -> Result<(), FormatError> {
        if self.pos != self.buf.len() {
            return Err(FormatError::Invalid {
                offset: self.pos,
                what: "trailing data",
                detail: format!("{} unexpected bytes", self.buf.len() - self.pos),
            });
        }
        Ok(())
    }
}

/// Narrow to `f32`, failing on values that do not survive (`offset` is the
/// byte position the value would occupy).
pub(crate) fn push_f32(out: &mut Vec<u8>, v: f64) -> Result<(), FormatError> {
    let f = v as f32;
    if !f.is_finite() {
        return Err(FormatError::NonFinite { offset: out.len() });
    }
    out.extend_from_slice(&f.to_le_bytes());
    Ok(())
}

pub(crate) fn positive_dim(v: u32, offset: usize, what: &'static str) -> Result<usize, FormatError> {
    if v == 0 {
        return Err(FormatError::Invalid { offset, what, detail: "dimension must be positive".into() });
    }
    Ok(v as usize)
}

pub(crate) fn dim_u32(v: usize, offset: usize, what: &'static str) -> Result<u32, FormatError> {
    u32::try_from(v).map_err(|_| FormatError::Invalid { offset, what, detail: format!("{v} does not fit in u32") })
}
