//! Middlebury `.flo` optical flow. Invalid pixels are written as 1e10 in
//! both components; any component above 1e9 in magnitude reads back as
//! invalid.

use std::path::Path;

use craft_core::FlowField;

use super::bytes::{dim_u32, positive_dim, Reader};
use super::{at, read_file, write_file};
use crate::error::{FormatError, Result};

pub const TAG: f32 = 202021.25;
const UNKNOWN: f32 = 1e10;
const UNKNOWN_THRESHOLD: f32 = 1e9;

pub fn encode(f: &FlowField) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::with_capacity(12 + 8 * f.u().len());
    out.extend_from_slice(&TAG.to_le_bytes());
    for d in [f.width(), f.height()] {
        let d = dim_u32(d, out.len(), "dimension")?;
        let d = i32::try_from(d).map_err(|_| FormatError::Invalid {
            offset: out.len(),
            what: "dimension",
            detail: format!("{d} does not fit in i32"),
        })?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for i in 0..f.u().len() {
        let (u, v) = if f.valid()[i] { (f.u()[i] as f32, f.v()[i] as f32) } else { (UNKNOWN, UNKNOWN) };
        for c in [u, v] {
            if !c.is_finite() || (f.valid()[i] && c.abs() > UNKNOWN_THRESHOLD) {
                return Err(FormatError::NonFinite { offset: out.len() });
            }
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<FlowField, FormatError> {
    let mut r = Reader::new(bytes);
    if r.f32("tag")? != TAG {
        return Err(FormatError::BadMagic { expected: "flo tag 202021.25" });
    }
    let mut dims = [0usize; 2];
    for d in &mut dims {
        let off = r.offset();
        let v = r.i32("dimension")?;
        let v = u32::try_from(v).map_err(|_| FormatError::Invalid { offset: off, what: "dimension", detail: format!("{v} is negative") })?;
        *d = positive_dim(v, off, "dimension")?;
    }
    let [w, h] = dims;
    let n = w.checked_mul(h).ok_or(FormatError::Invalid { offset: 4, what: "dimension", detail: "size overflows".into() })?;
    let start = r.offset();
    let raw = r.take(n.saturating_mul(8), "flow vectors")?;
    let (mut u, mut v, mut valid) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (i, c) in raw.chunks_exact(8).enumerate() {
        let a = f32::from_le_bytes(c[..4].try_into().unwrap());
        let b = f32::from_le_bytes(c[4..].try_into().unwrap());
        if a.is_nan() || b.is_nan() {
            return Err(FormatError::NonFinite { offset: start + 8 * i + if a.is_nan() { 0 } else { 4 } });
        }
        let ok = a.abs() <= UNKNOWN_THRESHOLD && b.abs() <= UNKNOWN_THRESHOLD;
        u.push(if ok { f64::from(a) } else { 0.0 });
        v.push(if ok { f64::from(b) } else { 0.0 });
        valid.push(ok);
    }
    r.finish()?;
    FlowField::new(w, h, u, v, valid)
        .map_err(|e| FormatError::Invalid { offset: start, what: "flow vectors", detail: e.to_string() })
}

pub fn save(f: &FlowField, path: &Path) -> Result<()> {
    let bytes = encode(f).map_err(at(path))?;
    write_file(path, &bytes)
}

pub fn load(path: &Path) -> Result<FlowField> {
    decode(&read_file(path)?).map_err(at(path))
}
