//! Run configuration: optional JSON file, then command-line overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use craft_core::corr::{DEFAULT_CFA_MODES, DEFAULT_FOV_PIXELS, DEFAULT_HEATMAP_SCALE, DEFAULT_NORM_EPS};
use craft_core::features::{DEFAULT_CHANNELS, DEFAULT_PATCH};
use craft_core::sstrans::{DEFAULT_MODES, DEFAULT_RADIUS, DEFAULT_SKIP_WEIGHT};
use craft_core::AttackSweepConfig;

use crate::error::{CraftError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Image height and width in pixels.
    pub height: usize,
    pub width: usize,
    pub dims: usize,
    pub modes: usize,
    pub radius: usize,
    pub skip_weight: f64,
    pub cfa_modes: usize,
    pub norm_eps: f64,
    pub norm_gain: f64,
    pub norm_bias: f64,
    pub patch: usize,
    pub normalize: bool,
    /// `start:end:step` (inclusive) or a comma-separated list.
    pub sweep: String,
    pub displacement: (i64, i64),
    pub fov: usize,
    pub scale: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            height: 256,
            width: 512,
            dims: DEFAULT_CHANNELS,
            modes: DEFAULT_MODES,
            radius: DEFAULT_RADIUS,
            skip_weight: DEFAULT_SKIP_WEIGHT,
            cfa_modes: DEFAULT_CFA_MODES,
            norm_eps: DEFAULT_NORM_EPS,
            norm_gain: 1.0,
            norm_bias: 0.0,
            patch: DEFAULT_PATCH,
            normalize: false,
            sweep: "100:300:20".into(),
            displacement: (8, 0),
            fov: DEFAULT_FOV_PIXELS,
            scale: DEFAULT_HEATMAP_SCALE,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CraftError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CraftError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn sweep_config(&self) -> Result<AttackSweepConfig> {
        parse_sweep(&self.sweep)
    }
}

fn int<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| CraftError::Usage(format!("{what}: cannot parse {s:?}")))
}

/// `HxW`.
pub fn parse_size(s: &str) -> Result<(usize, usize)> {
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Ok((int(h, "size")?, int(w, "size")?)),
        None => Err(CraftError::Usage(format!("size must look like HxW, got {s:?}"))),
    }
}

/// `HxWxD`, comma separated; an empty string is an empty list.
pub fn parse_sizes(s: &str) -> Result<Vec<(usize, usize, usize)>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let parts: Vec<&str> = p.split(['x', 'X']).collect();
            match parts[..] {
                [h, w, d] => Ok((int(h, "sizes")?, int(w, "sizes")?, int(d, "sizes")?)),
                _ => Err(CraftError::Usage(format!("sizes entries must look like HxWxD, got {p:?}"))),
            }
        })
        .collect()
}

/// `start:end:step` or `a,b,c`.
pub fn parse_sweep(s: &str) -> Result<AttackSweepConfig> {
    let parts: Vec<&str> = s.split(':').collect();
    let cfg = match parts[..] {
        [a, b, c] => AttackSweepConfig::range(int(a, "sweep")?, int(b, "sweep")?, int(c, "sweep")?),
        [_] => AttackSweepConfig::new(
            s.split(',').filter(|p| !p.trim().is_empty()).map(|p| int(p, "sweep")).collect::<Result<_>>()?,
        ),
        _ => return Err(CraftError::Usage(format!("sweep must be start:end:step or a list, got {s:?}"))),
    };
    cfg.map_err(|e| CraftError::Usage(e.to_string()))
}

/// `dx,dy`.
pub fn parse_pair(s: &str) -> Result<(i64, i64)> {
    match s.split_once(',') {
        Some((a, b)) => Ok((int(a, "displacement")?, int(b, "displacement")?)),
        None => Err(CraftError::Usage(format!("expected dx,dy, got {s:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sweep_pairs() {
        let cfg = RunConfig::default().sweep_config().unwrap();
        let s: Vec<_> = cfg.shifts().map(|s| (s.du, s.dv)).collect();
        assert_eq!(s.len(), 11);
        assert_eq!(s[0], (100, 50));
        assert_eq!(s[10], (300, 150));
    }

    #[test]
    fn parsers() {
        assert_eq!(parse_size("64x32").unwrap(), (64, 32));
        assert!(parse_size("64").is_err());
        assert_eq!(parse_sizes("2x3x4, 1x1x1").unwrap(), vec![(2, 3, 4), (1, 1, 1)]);
        assert!(parse_sizes("").unwrap().is_empty());
        assert_eq!(parse_sweep("0,16,32").unwrap().len(), 3);
        assert!(parse_sweep("32,16").is_err());
        assert_eq!(parse_pair("-3,4").unwrap(), (-3, 4));
    }

    #[test]
    fn partial_json_keeps_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 7, "modes": 2}"#).unwrap();
        assert_eq!((c.seed, c.modes, c.radius), (7, 2, DEFAULT_RADIUS));
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 1}"#).is_err());
    }
}
