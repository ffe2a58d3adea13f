//! Exhaustive argmax matcher and the image-shifting attack.
//!
//! The attack shifts frame 1 toward the bottom right (truncating at the
//! border), estimates flow on the shifted pair, moves the estimate back to
//! frame-1 coordinates and compares it with the unshifted estimate minus
//! the shift. A matcher that is robust to the shift leaves a zero residual.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::corr::{cfa_correlation, normalize_volume, CfaParams, CorrelationVolume};
use crate::error::{bail, Result};
use crate::features::{patchify_features, Image, SyntheticScene, DEFAULT_PROJECTION_SEED};
use crate::flow::FlowField;
use crate::rng::{seeded, SeededRng};

/// Integer shift of frame 1; positive values move content right / down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShiftSpec {
    pub du: i64,
    pub dv: i64,
}

impl ShiftSpec {
    pub fn new(du: i64, dv: i64) -> Self {
        ShiftSpec { du, dv }
    }

    /// Errors unless some content survives a shift of a `width x height`
    /// image.
    pub fn check_fits(&self, width: usize, height: usize) -> Result<()> {
        if self.du.unsigned_abs() as usize >= width || self.dv.unsigned_abs() as usize >= height {
            bail!(
                Parameter,
                "shift ({}, {}) leaves nothing of a {width}x{height} image",
                self.du,
                self.dv
            );
        }
        Ok(())
    }
}

/// Content moves by `(du, dv)`; what falls off the edge is dropped and the
/// vacated band is black.
pub fn shift_image(img: &Image, s: ShiftSpec) -> Result<Image> {
    s.check_fits(img.width(), img.height())?;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut out = Image::filled(img.width(), img.height(), img.channels(), 0)?;
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = (x - s.du, y - s.dv);
            if sx >= 0 && sy >= 0 && sx < w && sy < h {
                out.pixel_mut(x as usize, y as usize)
                    .copy_from_slice(img.pixel(sx as usize, sy as usize));
            }
        }
    }
    Ok(out)
}

/// Grid translation of a flow field by the shift; vacated pixels are
/// invalid. Vectors are left untouched.
pub fn shift_flow(f: &FlowField, s: ShiftSpec) -> FlowField {
    f.translate(s.du, s.dv)
}

/// Move a flow estimated on the shifted frame back to frame-1
/// coordinates. Pixels whose source falls outside the field are invalid.
pub fn unshift_flow(f: &FlowField, s: ShiftSpec) -> FlowField {
    f.translate(-s.du, -s.dv)
}

/// Flow from the best frame-2 cell for every frame-1 cell, in pixels
/// (`scale` pixels per grid cell). Ties go to the smallest displacement,
/// then to the first cell in row-major order.
pub fn argmax_match(volume: &CorrelationVolume, scale: f64) -> FlowField {
    let (h, w) = (volume.height(), volume.width());
    let mut u = Vec::with_capacity(h * w);
    let mut v = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let row = volume.row(i, j);
            let mut best = (f64::NEG_INFINITY, i64::MAX, 0usize);
            for (q, &c) in row.iter().enumerate() {
                let (dm, dn) = ((q / w) as i64 - i as i64, (q % w) as i64 - j as i64);
                let mag = dm * dm + dn * dn;
                if c > best.0 || (c == best.0 && mag < best.1) {
                    best = (c, mag, q);
                }
            }
            let q = best.2;
            u.push(((q % w) as f64 - j as f64) * scale);
            v.push(((q / w) as f64 - i as f64) * scale);
        }
    }
    FlowField::new(w, h, u, v, vec![true; h * w]).expect("dimensions are consistent")
}

/// Residual of the shift identity: `F2 - (shift(F0) - (du, dv))`, with the
/// bracket carried into `F2`'s frame-1 coordinates, over jointly valid
/// pixels. Returns the residual field and its AEPE.
pub fn attack_residual(f2: &FlowField, f0: &FlowField, s: ShiftSpec) -> Result<(FlowField, f64)> {
    f2.same_dims(f0, "attack_residual")?;
    let expected = unshift_flow(&shift_flow(f0, s), s).offset(s.du as f64, s.dv as f64);
    let n = f2.width() * f2.height();
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut valid = vec![false; n];
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..n {
        if f2.valid()[i] && expected.valid()[i] {
            u[i] = f2.u()[i] - expected.u()[i];
            v[i] = f2.v()[i] - expected.v()[i];
            valid[i] = true;
            sum += libm::hypot(u[i], v[i]);
            count += 1;
        }
    }
    if count == 0 {
        bail!(UndefinedMetric, "no pixel is valid in both flows after shift ({}, {})", s.du, s.dv);
    }
    Ok((FlowField::new(f2.width(), f2.height(), u, v, valid)?, sum / count as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ShiftMode {
    /// Laplace(0, 16) horizontally, Laplace(0, 10) vertically.
    Laplacian,
    /// Uniform integers in [-320, 320] x [-160, 160].
    Uniform,
}

pub const LAPLACE_SCALE_U: f64 = 16.0;
pub const LAPLACE_SCALE_V: f64 = 10.0;
pub const UNIFORM_RANGE_U: i64 = 320;
pub const UNIFORM_RANGE_V: i64 = 160;

/// Stream of random shifts for shift augmentation.
pub struct ShiftSampler {
    rng: SeededRng,
    mode: ShiftMode,
}

impl ShiftSampler {
    pub fn new(seed: u64, mode: ShiftMode) -> Self {
        ShiftSampler { rng: seeded(seed), mode }
    }

    fn laplace(&mut self, scale: f64) -> f64 {
        loop {
            let u: f64 = self.rng.gen::<f64>() - 0.5;
            let tail = 1.0 - 2.0 * u.abs();
            if tail > 0.0 {
                return -scale * u.signum() * libm::log(tail);
            }
        }
    }

    pub fn sample(&mut self) -> ShiftSpec {
        match self.mode {
            ShiftMode::Laplacian => ShiftSpec::new(
                libm::round(self.laplace(LAPLACE_SCALE_U)) as i64,
                libm::round(self.laplace(LAPLACE_SCALE_V)) as i64,
            ),
            ShiftMode::Uniform => ShiftSpec::new(
                self.rng.gen_range(-UNIFORM_RANGE_U..=UNIFORM_RANGE_U),
                self.rng.gen_range(-UNIFORM_RANGE_V..=UNIFORM_RANGE_V),
            ),
        }
    }
}

impl Iterator for ShiftSampler {
    type Item = ShiftSpec;

    fn next(&mut self) -> Option<ShiftSpec> {
        Some(self.sample())
    }
}

/// First shift drawn from a fresh sampler.
pub fn sample_shift(seed: u64, mode: ShiftMode) -> ShiftSpec {
    ShiftSampler::new(seed, mode).sample()
}

/// Horizontal shifts of a sweep; each vertical shift is half the
/// horizontal one, rounded half up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackSweepConfig {
    horizontal: Vec<i64>,
}

impl AttackSweepConfig {
    pub fn new(horizontal: Vec<i64>) -> Result<Self> {
        if horizontal.iter().any(|&du| du < 0) {
            bail!(Parameter, "sweep shifts must be non-negative");
        }
        if horizontal.windows(2).any(|w| w[0] >= w[1]) {
            bail!(Parameter, "sweep shifts must be strictly increasing");
        }
        Ok(AttackSweepConfig { horizontal })
    }

    /// `start, start + step, ...` up to and including `end`.
    pub fn range(start: i64, end: i64, step: i64) -> Result<Self> {
        if step <= 0 {
            bail!(Parameter, "sweep step must be positive, got {step}");
        }
        let mut v = Vec::new();
        let mut du = start;
        while du <= end {
            v.push(du);
            du += step;
        }
        AttackSweepConfig::new(v)
    }

    pub fn vertical_for(du: i64) -> i64 {
        (du + 1).div_euclid(2)
    }

    pub fn shifts(&self) -> impl Iterator<Item = ShiftSpec> + '_ {
        self.horizontal.iter().map(|&du| ShiftSpec::new(du, Self::vertical_for(du)))
    }

    pub fn len(&self) -> usize {
        self.horizontal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.horizontal.is_empty()
    }
}

/// Featurize, correlate and match: the desk-scale flow estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchPipeline {
    pub patch: usize,
    pub channels: usize,
    pub projection_seed: u64,
    pub cfa: CfaParams,
    pub normalize: bool,
}

impl MatchPipeline {
    pub fn new(patch: usize, channels: usize, cfa: CfaParams) -> Self {
        MatchPipeline { patch, channels, projection_seed: DEFAULT_PROJECTION_SEED, cfa, normalize: false }
    }

    pub fn volume(&self, frame1: &Image, frame2: &Image) -> Result<CorrelationVolume> {
        let f1 = patchify_features(frame1, self.patch, self.channels, self.projection_seed)?;
        let f2 = patchify_features(frame2, self.patch, self.channels, self.projection_seed)?;
        let c = cfa_correlation(&f1, &f2, &self.cfa)?;
        if self.normalize {
            normalize_volume(&c, &self.cfa)
        } else {
            Ok(c)
        }
    }

    /// Flow at pixel resolution; every pixel of a cell shares its vector.
    pub fn estimate(&self, frame1: &Image, frame2: &Image) -> Result<FlowField> {
        let c = self.volume(frame1, frame2)?;
        Ok(argmax_match(&c, self.patch as f64).upsample(self.patch))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub du: i64,
    pub dv: i64,
    pub aepe: f64,
    pub valid_pixels: usize,
}

/// One attack evaluation. Estimates are masked by the ground-truth
/// validity (carried along with the shift for the shifted pair), so pixels
/// without a correspondent in frame 2 are never scored.
pub fn attack_once(scene: &SyntheticScene, s: ShiftSpec, pipeline: &MatchPipeline) -> Result<(FlowField, SweepRow)> {
    attack_against(scene, &reference_flow(scene, pipeline)?, s, pipeline)
}

fn reference_flow(scene: &SyntheticScene, pipeline: &MatchPipeline) -> Result<FlowField> {
    pipeline.estimate(&scene.frame1, &scene.frame2)?.masked(scene.flow.valid())
}

fn attack_against(scene: &SyntheticScene, f0: &FlowField, s: ShiftSpec, pipeline: &MatchPipeline) -> Result<(FlowField, SweepRow)> {
    let shifted = shift_image(&scene.frame1, s)?;
    let gt_shifted = shift_flow(&scene.flow, s);
    let f1 = pipeline.estimate(&shifted, &scene.frame2)?.masked(gt_shifted.valid())?;
    let f2 = unshift_flow(&f1, s);
    let (residual, aepe) = attack_residual(&f2, f0, s)?;
    let row = SweepRow { du: s.du, dv: s.dv, aepe, valid_pixels: residual.valid_count() };
    Ok((residual, row))
}

/// Runs the attack for every shift of the sweep, in sweep order. The
/// unshifted estimate is computed once.
pub fn run_attack_sweep(cfg: &AttackSweepConfig, scene: &SyntheticScene, pipeline: &MatchPipeline) -> Result<Vec<SweepRow>> {
    let f0 = reference_flow(scene, pipeline)?;
    cfg.shifts().map(|s| attack_against(scene, &f0, s, pipeline).map(|(_, row)| row)).collect()
}
