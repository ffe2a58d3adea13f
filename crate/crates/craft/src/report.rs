//! JSON, JSONL and CSV report writers.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use craft_core::corr::CropWindow;
use craft_core::matchattack::SweepRow;

use crate::error::{CraftError, Result};

/// Written by `craft gen` next to the frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneInfo {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub displacement: (i64, i64),
    pub valid_pixels: usize,
}

/// Sidecar of a heatmap PGM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapInfo {
    pub query: (usize, usize),
    pub fov: usize,
    pub scale: usize,
    pub window: CropWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckLine {
    pub label: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub mismatches: usize,
    pub passed: bool,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CraftError::io(path, e))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

pub fn jsonl<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    write(path, &jsonl(rows)?)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("du,dv,aepe,valid_pixels\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.du, r.dv, r.aepe, r.valid_pixels);
    }
    out
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    write(path, &sweep_csv(rows))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| CraftError::io(path, e))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_rows_serialize_with_fixed_keys() {
        let rows = [SweepRow { du: 16, dv: 8, aepe: 0.0, valid_pixels: 10 }];
        assert_eq!(jsonl(&rows).unwrap(), "{\"du\":16,\"dv\":8,\"aepe\":0.0,\"valid_pixels\":10}\n");
        assert_eq!(sweep_csv(&rows), "du,dv,aepe,valid_pixels\n16,8,0,10\n");
    }
}
