//! Binary interchange formats. Every multi-byte value is little-endian.
//!
//! | file   | layout |
//! |--------|--------|
//! | CRFM   | `"CRFM"`, u32 H, W, D, then H·W·D f32 (channel fastest) |
//! | CRCV   | `"CRCV"`, kind byte, u32 H, W, then H²·W² f32 over (i, j, m, n) |
//! | CRWT   | `"CRWT"`, u32 count, then per record: u32 name length, UTF-8 name, u32 rank, rank × u32 dims, f32 payload |
//! | `.flo` | f32 202021.25, i32 width, height, then (u, v) f32 pairs |
//! | PGM/PPM | binary P5 / P6, maxval 255 |

mod bytes;
pub mod feature_map;
pub mod flo;
pub mod pnm;
pub mod volume;
pub mod weights;

use std::fs;
use std::path::Path;

use crate::error::{CraftError, FormatError, Result};

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CraftError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CraftError::io(path, e))
}

pub(crate) fn at(path: &Path) -> impl FnOnce(FormatError) -> CraftError + '_ {
    move |source| CraftError::Format { path: path.to_path_buf(), source }
}
