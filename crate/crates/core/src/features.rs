//! Frame features and the synthetic scenes that feed them.
//!
//! Features come either from files (see the `craft` crate) or from
//! [`patchify_features`], a deterministic stand-in for a learned encoder:
//! every `patch x patch` block is flattened, centred, projected to `D`
//! channels with a seeded random matrix, and scaled to unit length.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{bail, Result};
use crate::flow::FlowField;
use crate::rng::{seeded, uniform_tensor};
use crate::tensor::Tensor;

pub const DEFAULT_PATCH: usize = 8;
pub const DEFAULT_CHANNELS: usize = 8;
pub const DEFAULT_PROJECTION_SEED: u64 = 0x0c4a_f7f3;

/// `H x W` grid of `D`-dimensional feature vectors, stored as a
/// `[H, W, D]` tensor (channel fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    values: Tensor,
}

impl FeatureMap {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.shape().len() != 3 {
            bail!(Dimension, "feature map must be H x W x D, got {:?}", values.shape());
        }
        Ok(FeatureMap { values })
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        FeatureMap::new(Tensor::new(vec![height, width, channels], data)?)
    }

    /// Rebuild from a `(H*W) x D` matrix.
    pub fn from_matrix(height: usize, width: usize, m: Tensor) -> Result<Self> {
        let d = match m.shape() {
            [p, d] if *p == height * width => *d,
            s => bail!(Dimension, "matrix {s:?} does not hold a {height}x{width} feature grid"),
        };
        FeatureMap::new(m.reshape(&[height, width, d])?)
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn pixels(&self) -> usize {
        self.height() * self.width()
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    /// Feature vector at grid row `i`, column `j`.
    pub fn at(&self, i: usize, j: usize) -> &[f64] {
        let d = self.channels();
        let start = (i * self.width() + j) * d;
        &self.values.data()[start..start + d]
    }

    /// Flattened `(H*W) x D` view.
    pub fn to_matrix(&self) -> Tensor {
        Tensor::from_parts(vec![self.pixels(), self.channels()], self.values.data().to_vec())
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.values.shape() == other.values.shape()
    }
}

/// 8-bit image, row-major with interleaved channels (1 = gray, 3 = RGB).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            bail!(Dimension, "image must be non-empty, got {width}x{height}");
        }
        if channels != 1 && channels != 3 {
            bail!(Parameter, "images carry 1 or 3 channels, got {channels}");
        }
        if samples.len() != width * height * channels {
            bail!(
                Dimension,
                "{width}x{height}x{channels} image needs {} samples, got {}",
                width * height * channels,
                samples.len()
            );
        }
        Ok(Image { width, height, channels, samples })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Image::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let start = (y * self.width + x) * self.channels;
        &self.samples[start..start + self.channels]
    }

    pub(crate) fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [u8] {
        let start = (y * self.width + x) * self.channels;
        &mut self.samples[start..start + self.channels]
    }
}

/// Image pair related by a known flow.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub frame1: Image,
    pub frame2: Image,
    /// Ground truth at pixel resolution; invalid where the correspondent
    /// leaves frame 2.
    pub flow: FlowField,
}

fn noise_image(rng: &mut crate::rng::SeededRng, width: usize, height: usize) -> Vec<u8> {
    (0..width * height).map(|_| if rng.gen::<bool>() { 255 } else { 0 }).collect()
}

/// Binary noise texture in frame 1; frame 2 is frame 1 moved by
/// `(dx, dy)` with the uncovered area refilled from an independent noise
/// stream (never wrapped around).
pub fn generate_translated_scene(
    seed: u64,
    width: usize,
    height: usize,
    displacement: (i64, i64),
) -> Result<SyntheticScene> {
    let (dx, dy) = displacement;
    if width == 0 || height == 0 {
        bail!(Parameter, "scene must be non-empty, got {width}x{height}");
    }
    if dx.unsigned_abs() as usize >= width || dy.unsigned_abs() as usize >= height {
        bail!(Parameter, "displacement ({dx}, {dy}) does not fit a {width}x{height} scene");
    }
    let mut rng = seeded(seed);
    let frame1 = noise_image(&mut rng, width, height);
    let mut fill = seeded(seed ^ 0x9e37_79b9_7f4a_7c15);
    let fresh = noise_image(&mut fill, width, height);

    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < width as i64 && y < height as i64;
    let mut frame2 = vec![0u8; width * height];
    let mut valid = vec![false; width * height];
    for y in 0..height as i64 {
        for x in 0..width as i64 {
            let idx = y as usize * width + x as usize;
            let (sx, sy) = (x - dx, y - dy);
            frame2[idx] = if inside(sx, sy) { frame1[sy as usize * width + sx as usize] } else { fresh[idx] };
            valid[idx] = inside(x + dx, y + dy);
        }
    }
    let n = width * height;
    let flow = FlowField::new(width, height, vec![dx as f64; n], vec![dy as f64; n], valid)?;
    Ok(SyntheticScene {
        frame1: Image::new(width, height, 1, frame1)?,
        frame2: Image::new(width, height, 1, frame2)?,
        flow,
    })
}

/// Non-overlapping patch featurizer. The projection depends only on
/// `(patch, channels, image channels, seed)`, so two images featurized with
/// the same arguments share it.
pub fn patchify_features(img: &Image, patch: usize, channels_out: usize, seed: u64) -> Result<FeatureMap> {
    if patch == 0 || channels_out == 0 {
        bail!(Parameter, "patch size and channel count must be positive");
    }
    if !img.width().is_multiple_of(patch) || !img.height().is_multiple_of(patch) {
        bail!(
            Parameter,
            "patch {patch} does not divide image {}x{}",
            img.width(),
            img.height()
        );
    }
    let (gh, gw) = (img.height() / patch, img.width() / patch);
    let in_dim = patch * patch * img.channels();
    let mut rng = seeded(seed);
    let projection = uniform_tensor(&mut rng, &[in_dim, channels_out], 1.0);

    let mut flat = Vec::with_capacity(gh * gw * in_dim);
    for gy in 0..gh {
        for gx in 0..gw {
            for py in 0..patch {
                for px in 0..patch {
                    let p = img.pixel(gx * patch + px, gy * patch + py);
                    flat.extend(p.iter().map(|&s| s as f64 / 255.0 - 0.5));
                }
            }
        }
    }
    let patches = Tensor::from_parts(vec![gh * gw, in_dim], flat);
    let mut projected = patches.matmul(&projection)?;
    for row in projected.data_mut().chunks_mut(channels_out) {
        let norm = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>());
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    FeatureMap::from_matrix(gh, gw, projected)
}
