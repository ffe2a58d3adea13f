use std::path::Path;

use craft_core::FeatureMap;

use super::bytes::{dim_u32, positive_dim, push_f32, Reader};
use super::{at, read_file, write_file};
use crate::error::{FormatError, Result};

pub const MAGIC: &str = "CRFM";

pub fn encode(map: &FeatureMap) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::with_capacity(16 + 4 * map.values().len());
    out.extend_from_slice(MAGIC.as_bytes());
    for (d, what) in [(map.height(), "height"), (map.width(), "width"), (map.channels(), "channels")] {
        let v = dim_u32(d, out.len(), what)?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in map.values().data() {
        push_f32(&mut out, v)?;
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<FeatureMap, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let mut dims = [0usize; 3];
    for (slot, what) in dims.iter_mut().zip(["height", "width", "channels"]) {
        let off = r.offset();
        *slot = positive_dim(r.u32(what)?, off, what)?;
    }
    let [h, w, d] = dims;
    let off = r.offset();
    let n = h
        .checked_mul(w)
        .and_then(|p| p.checked_mul(d))
        .ok_or(FormatError::Invalid { offset: off, what: "header", detail: "size overflows".into() })?;
    let data = r.finite_f32s(n, "feature payload")?;
    r.finish()?;
    FeatureMap::from_vec(h, w, d, data.into_iter().map(f64::from).collect())
        .map_err(|e| FormatError::Invalid { offset: off, what: "feature payload", detail: e.to_string() })
}

pub fn save(map: &FeatureMap, path: &Path) -> Result<()> {
    let bytes = encode(map).map_err(at(path))?;
    write_file(path, &bytes)
}

pub fn load(path: &Path) -> Result<FeatureMap> {
    decode(&read_file(path)?).map_err(at(path))
}
