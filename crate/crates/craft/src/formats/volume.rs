use std::path::Path;

use craft_core::{CorrelationVolume, Tensor, VolumeKind};

use super::bytes::{dim_u32, positive_dim, push_f32, Reader};
use super::{at, read_file, write_file};
use crate::error::{FormatError, Result};

pub const MAGIC: &str = "CRCV";

pub fn encode(c: &CorrelationVolume) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::with_capacity(13 + 4 * c.values().len());
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(c.kind().code());
    let h = dim_u32(c.height(), out.len(), "height")?;
    out.extend_from_slice(&h.to_le_bytes());
    let w = dim_u32(c.width(), out.len(), "width")?;
    out.extend_from_slice(&w.to_le_bytes());
    for &v in c.values().data() {
        push_f32(&mut out, v)?;
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<CorrelationVolume, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let off = r.offset();
    let code = r.u8("kind")?;
    let kind = VolumeKind::from_code(code)
        .ok_or_else(|| FormatError::Invalid { offset: off, what: "kind", detail: format!("unknown code {code}") })?;
    let off = r.offset();
    let h = positive_dim(r.u32("height")?, off, "height")?;
    let off = r.offset();
    let w = positive_dim(r.u32("width")?, off, "width")?;
    let off = r.offset();
    let n = (h * w)
        .checked_mul(h * w)
        .ok_or(FormatError::Invalid { offset: off, what: "header", detail: "size overflows".into() })?;
    let data = r.finite_f32s(n, "volume payload")?;
    r.finish()?;
    let values = Tensor::new(vec![h, w, h, w], data.into_iter().map(f64::from).collect())
        .map_err(|e| FormatError::Invalid { offset: off, what: "volume payload", detail: e.to_string() })?;
    CorrelationVolume::new(values, kind)
        .map_err(|e| FormatError::Invalid { offset: off, what: "volume payload", detail: e.to_string() })
}

pub fn save(c: &CorrelationVolume, path: &Path) -> Result<()> {
    let bytes = encode(c).map_err(at(path))?;
    write_file(path, &bytes)
}

pub fn load(path: &Path) -> Result<CorrelationVolume> {
    decode(&read_file(path)?).map_err(at(path))
}
