//! All-pairs correlation volumes between two frames.
//!
//! [`dot_correlation`] is the plain scaled dot product. [`cfa_correlation`]
//! runs each frame through `K` tied projections (the same matrix serves as
//! query and key), so every mode is a symmetric bilinear form, and blends
//! the `K` mode correlations with a softmax taken per 4-D cell.
//! [`normalize_volume`] layer-normalizes the whole volume at once.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::features::FeatureMap;
use crate::rng::{orthogonal_matrix, seeded};
use crate::tensor::{moments, Tensor};

pub const DEFAULT_CFA_MODES: usize = 4;
pub const DEFAULT_NORM_EPS: f64 = 1e-6;
pub const DEFAULT_FOV_PIXELS: usize = 256;
pub const DEFAULT_HEATMAP_SCALE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum VolumeKind {
    Dot,
    Cfa,
    NormalizedDot,
    NormalizedCfa,
}

impl VolumeKind {
    pub fn is_normalized(self) -> bool {
        matches!(self, VolumeKind::NormalizedDot | VolumeKind::NormalizedCfa)
    }

    pub fn code(self) -> u8 {
        match self {
            VolumeKind::Dot => 0,
            VolumeKind::Cfa => 1,
            VolumeKind::NormalizedDot => 2,
            VolumeKind::NormalizedCfa => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => VolumeKind::Dot,
            1 => VolumeKind::Cfa,
            2 => VolumeKind::NormalizedDot,
            3 => VolumeKind::NormalizedCfa,
            _ => return None,
        })
    }
}

/// `H x W x H x W` similarities; entry `(i, j, m, n)` compares frame-1
/// pixel `(i, j)` with frame-2 pixel `(m, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationVolume {
    values: Tensor,
    kind: VolumeKind,
}

impl CorrelationVolume {
    pub fn new(values: Tensor, kind: VolumeKind) -> Result<Self> {
        match values.shape() {
            [h, w, h2, w2] if h == h2 && w == w2 => Ok(CorrelationVolume { values, kind }),
            s => bail!(Dimension, "correlation volume must be H x W x H x W, got {s:?}"),
        }
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize, m: usize, n: usize) -> f64 {
        let (h, w) = (self.height(), self.width());
        self.values.data()[((i * w + j) * h + m) * w + n]
    }

    /// Correlations of frame-1 pixel `(i, j)` with every frame-2 pixel,
    /// row-major over `(m, n)`.
    pub fn row(&self, i: usize, j: usize) -> &[f64] {
        let p = self.height() * self.width();
        let start = (i * self.width() + j) * p;
        &self.values.data()[start..start + p]
    }
}

/// Tied projections plus the scalar affine parameters of the global
/// normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct CfaParams {
    /// `K` matrices, each `D x D`, applied as `f W`.
    pub projections: Vec<Tensor>,
    pub norm_gain: f64,
    pub norm_bias: f64,
    pub norm_eps: f64,
}

impl CfaParams {
    pub fn new(projections: Vec<Tensor>, norm_gain: f64, norm_bias: f64, norm_eps: f64) -> Result<Self> {
        let p = CfaParams { projections, norm_gain, norm_bias, norm_eps };
        p.validate()?;
        Ok(p)
    }

    /// `K` identity projections, gain 1, bias 0.
    pub fn identity(channels: usize, modes: usize) -> Self {
        CfaParams {
            projections: vec![Tensor::identity(channels); modes],
            norm_gain: 1.0,
            norm_bias: 0.0,
            norm_eps: DEFAULT_NORM_EPS,
        }
    }

    /// `K` seeded orthogonal projections, gain 1, bias 0.
    pub fn orthogonal(seed: u64, channels: usize, modes: usize) -> Self {
        let mut rng = seeded(seed);
        CfaParams {
            projections: (0..modes).map(|_| orthogonal_matrix(&mut rng, channels)).collect(),
            norm_gain: 1.0,
            norm_bias: 0.0,
            norm_eps: DEFAULT_NORM_EPS,
        }
    }

    pub fn num_modes(&self) -> usize {
        self.projections.len()
    }

    pub fn channels(&self) -> usize {
        self.projections.first().map_or(0, |w| w.shape()[0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.projections.is_empty() {
            bail!(Parameter, "cross-frame attention needs at least one mode");
        }
        let d = self.channels();
        for (k, w) in self.projections.iter().enumerate() {
            if w.shape() != [d, d] {
                bail!(Dimension, "projection {k} is {:?}, expected {d}x{d}", w.shape());
            }
        }
        if !(self.norm_gain > 0.0) || !self.norm_gain.is_finite() {
            bail!(Parameter, "normalization gain must be positive and finite, got {}", self.norm_gain);
        }
        if !self.norm_bias.is_finite() {
            bail!(NonFinite, "normalization bias is {}", self.norm_bias);
        }
        if !(self.norm_eps >= 0.0) || !self.norm_eps.is_finite() {
            bail!(Parameter, "normalization eps must be finite and non-negative, got {}", self.norm_eps);
        }
        Ok(())
    }
}

fn check_pair(f1: &FeatureMap, f2: &FeatureMap) -> Result<()> {
    if !f1.same_shape(f2) {
        bail!(
            Dimension,
            "frame features differ: {:?} vs {:?}",
            f1.values().shape(),
            f2.values().shape()
        );
    }
    Ok(())
}

#[inline]
fn scaled_dot(a: &[f64], b: &[f64], sqrt_d: f64) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s / sqrt_d
}

/// `(H*W) x (H*W)` matrix of scaled dot products between rows.
fn pairwise(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let d = a.shape()[1];
    let sqrt_d = libm::sqrt(d as f64);
    let rows_b: Vec<&[f64]> = b.data().chunks(d).collect();
    let mut out = Vec::with_capacity(a.shape()[0] * rows_b.len());
    for ra in a.data().chunks(d) {
        out.extend(rows_b.iter().map(|rb| scaled_dot(ra, rb, sqrt_d)));
    }
    out
}

fn volume_shape(f: &FeatureMap) -> [usize; 4] {
    [f.height(), f.width(), f.height(), f.width()]
}

/// `C(i,j,m,n) = f1(i,j) . f2(m,n) / sqrt(D)`.
pub fn dot_correlation(f1: &FeatureMap, f2: &FeatureMap) -> Result<CorrelationVolume> {
    check_pair(f1, f2)?;
    let data = pairwise(&f1.to_matrix(), &f2.to_matrix());
    CorrelationVolume::new(Tensor::from_parts(volume_shape(f1).to_vec(), data), VolumeKind::Dot)
}

fn check_cfa(f1: &FeatureMap, f2: &FeatureMap, p: &CfaParams) -> Result<()> {
    check_pair(f1, f2)?;
    p.validate()?;
    if f1.channels() != p.channels() {
        bail!(Dimension, "features have {} channels, projections expect {}", f1.channels(), p.channels());
    }
    Ok(())
}

/// Projected frame-1 rows, projected frame-2 rows and the mode volumes.
type ModeVolumes = (Vec<Tensor>, Vec<Tensor>, Vec<Vec<f64>>);

/// Per-mode correlations `C_k`, each `(H*W)^2` long.
fn mode_volumes(f1: &FeatureMap, f2: &FeatureMap, p: &CfaParams) -> Result<ModeVolumes> {
    let (m1, m2) = (f1.to_matrix(), f2.to_matrix());
    let mut proj1 = Vec::with_capacity(p.num_modes());
    let mut proj2 = Vec::with_capacity(p.num_modes());
    let mut modes = Vec::with_capacity(p.num_modes());
    for w in &p.projections {
        let a = m1.matmul(w)?;
        let b = m2.matmul(w)?;
        modes.push(pairwise(&a, &b));
        proj1.push(a);
        proj2.push(b);
    }
    Ok((proj1, proj2, modes))
}

/// Softmax weights over modes at one cell, written into `weights`;
/// returns the blended correlation.
#[inline]
fn blend(values: &[f64], weights: &mut [f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (w, &v) in weights.iter_mut().zip(values) {
        *w = libm::exp(v - max);
        total += *w;
    }
    let mut c = 0.0;
    for (w, &v) in weights.iter_mut().zip(values) {
        *w /= total;
        c += *w * v;
    }
    c
}

fn cfa_raw(modes: &[Vec<f64>]) -> Vec<f64> {
    let k = modes.len();
    let cells = modes[0].len();
    let mut vals = vec![0.0; k];
    let mut weights = vec![0.0; k];
    (0..cells)
        .map(|c| {
            for (v, m) in vals.iter_mut().zip(modes) {
                *v = m[c];
            }
            blend(&vals, &mut weights)
        })
        .collect()
}

/// Cross-frame attention volume: `C = sum_k softmax_k(C_k) C_k` with
/// `C_k(i,j,m,n) = (f1(i,j) W_k) . (f2(m,n) W_k) / sqrt(D)`.
pub fn cfa_correlation(f1: &FeatureMap, f2: &FeatureMap, p: &CfaParams) -> Result<CorrelationVolume> {
    check_cfa(f1, f2, p)?;
    let (m1, m2) = (f1.to_matrix(), f2.to_matrix());
    let d = p.channels();
    let sqrt_d = libm::sqrt(d as f64);
    let proj1 = p.projections.iter().map(|w| m1.matmul(w)).collect::<Result<Vec<_>>>()?;
    let proj2 = p.projections.iter().map(|w| m2.matmul(w)).collect::<Result<Vec<_>>>()?;
    let cells = f1.pixels();
    let k = p.num_modes();
    let (mut vals, mut weights) = (vec![0.0; k], vec![0.0; k]);
    let mut data = Vec::with_capacity(cells * cells);
    for a in 0..cells {
        for b in 0..cells {
            for (v, (x, y)) in vals.iter_mut().zip(proj1.iter().zip(&proj2)) {
                *v = scaled_dot(&x.data()[a * d..(a + 1) * d], &y.data()[b * d..(b + 1) * d], sqrt_d);
            }
            data.push(blend(&vals, &mut weights));
        }
    }
    CorrelationVolume::new(Tensor::from_parts(volume_shape(f1).to_vec(), data), VolumeKind::Cfa)
}

/// Layer normalization over every entry of the volume.
pub fn normalize_volume(c: &CorrelationVolume, p: &CfaParams) -> Result<CorrelationVolume> {
    let kind = match c.kind {
        VolumeKind::Dot => VolumeKind::NormalizedDot,
        VolumeKind::Cfa => VolumeKind::NormalizedCfa,
        k => bail!(Usage, "volume is already normalized ({k:?})"),
    };
    if !(p.norm_gain > 0.0) {
        bail!(Parameter, "normalization gain must be positive, got {}", p.norm_gain);
    }
    let values = c.values.layer_normalize(p.norm_eps, p.norm_gain, p.norm_bias);
    CorrelationVolume::new(values, kind)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfaGradients {
    pub f1: Tensor,
    pub f2: Tensor,
    pub projections: Vec<Tensor>,
    /// Zero unless the backward pass ran through the normalization.
    pub norm_gain: f64,
    pub norm_bias: f64,
}

/// Gradients of `sum(upstream * V)` where `V` is the CFA volume, passed
/// through [`normalize_volume`] first when `normalized` is set.
pub fn cfa_backward(
    f1: &FeatureMap,
    f2: &FeatureMap,
    p: &CfaParams,
    upstream: &Tensor,
    normalized: bool,
) -> Result<CfaGradients> {
    check_cfa(f1, f2, p)?;
    let shape = volume_shape(f1);
    if upstream.shape() != shape {
        bail!(Dimension, "upstream gradient is {:?}, volume is {shape:?}", upstream.shape());
    }
    let (proj1, proj2, modes) = mode_volumes(f1, f2, p)?;
    let k = modes.len();
    let raw = cfa_raw(&modes);
    let pix = f1.pixels();
    let d = f1.channels();

    let (d_raw, norm_gain, norm_bias) = if normalized {
        let (mean, var) = moments(&raw);
        let inv = 1.0 / libm::sqrt(var + p.norm_eps);
        let n = raw.len() as f64;
        let xhat: Vec<f64> = raw.iter().map(|v| (v - mean) * inv).collect();
        let u = upstream.data();
        let d_gain: f64 = u.iter().zip(&xhat).map(|(a, b)| a * b).sum();
        let d_bias: f64 = u.iter().sum();
        let mean_dx = d_bias * p.norm_gain / n;
        let mean_dx_xhat = d_gain * p.norm_gain / n;
        let d = u
            .iter()
            .zip(&xhat)
            .map(|(&g, &xh)| inv * (p.norm_gain * g - mean_dx - xh * mean_dx_xhat))
            .collect();
        (d, d_gain, d_bias)
    } else {
        (upstream.data().to_vec(), 0.0, 0.0)
    };

    // dC/dC_k = s_k (1 + C_k - C) at each cell.
    let mut d_modes = vec![vec![0.0; raw.len()]; k];
    let mut vals = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for c in 0..raw.len() {
        for (v, m) in vals.iter_mut().zip(&modes) {
            *v = m[c];
        }
        let blended = blend(&vals, &mut weights);
        for kk in 0..k {
            d_modes[kk][c] = d_raw[c] * weights[kk] * (1.0 + vals[kk] - blended);
        }
    }

    let inv_sqrt_d = 1.0 / libm::sqrt(d as f64);
    let mut g1 = Tensor::zeros(&[pix, d]);
    let mut g2 = Tensor::zeros(&[pix, d]);
    let m1t = f1.to_matrix().transpose()?;
    let m2t = f2.to_matrix().transpose()?;
    let mut projections = Vec::with_capacity(k);
    for kk in 0..k {
        let dc = Tensor::from_parts(vec![pix, pix], core::mem::take(&mut d_modes[kk])).scale(inv_sqrt_d);
        let dp1 = dc.matmul(&proj2[kk])?;
        let dp2 = dc.transpose()?.matmul(&proj1[kk])?;
        let w = &p.projections[kk];
        projections.push(m1t.matmul(&dp1)?.add(&m2t.matmul(&dp2)?)?);
        let wt = w.transpose()?;
        g1 = g1.add(&dp1.matmul(&wt)?)?;
        g2 = g2.add(&dp2.matmul(&wt)?)?;
    }
    let fshape = f1.values().shape();
    Ok(CfaGradients {
        f1: g1.reshape(fshape)?,
        f2: g2.reshape(fshape)?,
        projections,
        norm_gain,
        norm_bias,
    })
}

/// Grid-cell rectangle a heatmap was cropped to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CropWindow {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    /// `rows x cols`, min-max scaled into `[0, 1]`.
    pub values: Tensor,
    pub window: CropWindow,
}

/// Correlations of one frame-1 query against frame 2, cropped to a
/// `fov_pixels / scale` cell square centred on the query (truncated at the
/// grid edge) and rescaled to `[0, 1]`. A flat crop maps to all zeros.
pub fn extract_query_heatmap(c: &CorrelationVolume, query: (usize, usize), fov_pixels: usize, scale: usize) -> Result<Heatmap> {
    let (qi, qj) = query;
    let (h, w) = (c.height(), c.width());
    if qi >= h || qj >= w {
        bail!(Parameter, "query ({qi}, {qj}) outside the {h}x{w} grid");
    }
    if scale == 0 || fov_pixels < scale {
        bail!(Parameter, "field of view {fov_pixels} px must cover at least one {scale}-px cell");
    }
    let side = (fov_pixels / scale) as i64;
    let half = side / 2;
    let clamp = |centre: usize, limit: usize| {
        let lo = (centre as i64 - half).max(0) as usize;
        let hi = ((centre as i64 - half + side).min(limit as i64)) as usize;
        (lo, hi)
    };
    let (r0, r1) = clamp(qi, h);
    let (c0, c1) = clamp(qj, w);
    let row = c.row(qi, qj);
    let mut crop = Vec::with_capacity((r1 - r0) * (c1 - c0));
    for m in r0..r1 {
        crop.extend_from_slice(&row[m * w + c0..m * w + c1]);
    }
    let lo = crop.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = crop.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let scaled = crop.iter().map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 }).collect();
    Ok(Heatmap {
        values: Tensor::from_parts(vec![r1 - r0, c1 - c0], scaled),
        window: CropWindow { row: r0, col: c0, rows: r1 - r0, cols: c1 - c0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::uniform_tensor;

    fn random_map(seed: u64, h: usize, w: usize, d: usize) -> FeatureMap {
        let mut rng = seeded(seed);
        FeatureMap::new(uniform_tensor(&mut rng, &[h, w, d], 1.0)).unwrap()
    }

    fn one_hot_2x2() -> FeatureMap {
        let mut data = vec![0.0; 16];
        for p in 0..4 {
            data[p * 4 + p] = 1.0;
        }
        FeatureMap::from_vec(2, 2, 4, data).unwrap()
    }

    #[test]
    fn one_hot_dot_volume() {
        let f = one_hot_2x2();
        let c = dot_correlation(&f, &f).unwrap();
        for p in 0..4 {
            for q in 0..4 {
                let expect = if p == q { 0.5 } else { 0.0 };
                assert_eq!(c.get(p / 2, p % 2, q / 2, q % 2), expect);
            }
        }
    }

    #[test]
    fn zero_frame_gives_zero_volume() {
        let f1 = random_map(1, 2, 3, 4);
        let f2 = FeatureMap::new(Tensor::zeros(&[2, 3, 4])).unwrap();
        assert_eq!(dot_correlation(&f1, &f2).unwrap().values().max_abs(), 0.0);
    }

    #[test]
    fn dot_matches_quadruple_loop() {
        let (f1, f2) = (random_map(2, 3, 3, 5), random_map(3, 3, 3, 5));
        let c = dot_correlation(&f1, &f2).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for m in 0..3 {
                    for n in 0..3 {
                        let mut s = 0.0;
                        for k in 0..5 {
                            s += f1.at(i, j)[k] * f2.at(m, n)[k];
                        }
                        assert!((c.get(i, j, m, n) - s / libm::sqrt(5.0)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn mismatched_frames_rejected() {
        let (a, b) = (random_map(1, 2, 2, 3), random_map(1, 2, 3, 3));
        assert!(matches!(dot_correlation(&a, &b), Err(crate::Error::Dimension(_))));
        let p = CfaParams::identity(4, 1);
        assert!(cfa_correlation(&a, &a, &p).is_err());
    }

    #[test]
    fn single_identity_mode_reduces_to_dot() {
        let (f1, f2) = (random_map(4, 3, 2, 6), random_map(5, 3, 2, 6));
        let cfa = cfa_correlation(&f1, &f2, &CfaParams::identity(6, 1)).unwrap();
        let dot = dot_correlation(&f1, &f2).unwrap();
        assert_eq!(cfa.values(), dot.values());
        assert_eq!(cfa.kind(), VolumeKind::Cfa);
    }

    #[test]
    fn swapping_frames_transposes_cfa() {
        let (f1, f2) = (random_map(6, 2, 3, 4), random_map(7, 2, 3, 4));
        let mut rng = seeded(8);
        let p = CfaParams::new((0..3).map(|_| uniform_tensor(&mut rng, &[4, 4], 1.0)).collect(), 1.0, 0.0, 1e-6).unwrap();
        let a = cfa_correlation(&f1, &f2, &p).unwrap();
        let b = cfa_correlation(&f2, &f1, &p).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                for m in 0..2 {
                    for n in 0..3 {
                        assert_eq!(a.get(i, j, m, n), b.get(m, n, i, j));
                    }
                }
            }
        }
    }

    #[test]
    fn two_mode_cfa_matches_cell_oracle() {
        let (f1, f2) = (random_map(9, 2, 2, 3), random_map(10, 2, 2, 3));
        let mut rng = seeded(11);
        let ws: Vec<Tensor> = (0..2).map(|_| uniform_tensor(&mut rng, &[3, 3], 1.0)).collect();
        let p = CfaParams::new(ws.clone(), 1.0, 0.0, 1e-6).unwrap();
        let c = cfa_correlation(&f1, &f2, &p).unwrap();
        let project = |f: &[f64], w: &Tensor| -> Vec<f64> {
            (0..3).map(|col| (0..3).map(|r| f[r] * w.data()[r * 3 + col]).sum()).collect()
        };
        for i in 0..2 {
            for j in 0..2 {
                for m in 0..2 {
                    for n in 0..2 {
                        let ck: Vec<f64> = ws
                            .iter()
                            .map(|w| {
                                let a = project(f1.at(i, j), w);
                                let b = project(f2.at(m, n), w);
                                a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / libm::sqrt(3.0)
                            })
                            .collect();
                        let e: Vec<f64> = ck.iter().map(|v| libm::exp(*v)).collect();
                        let z: f64 = e.iter().sum();
                        let expect: f64 = ck.iter().zip(&e).map(|(v, ev)| ev / z * v).sum();
                        assert!((c.get(i, j, m, n) - expect).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn normalization_examples() {
        let p = CfaParams { norm_bias: 0.25, ..CfaParams::identity(2, 1) };
        let flat = CorrelationVolume::new(Tensor::filled(&[2, 2, 2, 2], 3.0), VolumeKind::Dot).unwrap();
        let n = normalize_volume(&flat, &p).unwrap();
        assert!(n.values().data().iter().all(|&v| v == 0.25));
        assert_eq!(n.kind(), VolumeKind::NormalizedDot);
        assert!(matches!(normalize_volume(&n, &p), Err(crate::Error::Usage(_))));

        let (f1, f2) = (random_map(12, 3, 3, 4), random_map(13, 3, 3, 4));
        let p = CfaParams { norm_gain: 2.5, norm_bias: -1.0, ..CfaParams::identity(4, 2) };
        let n = normalize_volume(&cfa_correlation(&f1, &f2, &p).unwrap(), &p).unwrap();
        assert_eq!(n.kind(), VolumeKind::NormalizedCfa);
        let vals = n.values().data();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        assert!((mean + 1.0).abs() < 1e-6);
        assert!((var - 6.25).abs() < 1e-4);
    }

    #[test]
    fn non_positive_gain_rejected() {
        let p = CfaParams { norm_gain: 0.0, ..CfaParams::identity(2, 1) };
        assert!(p.validate().is_err());
        let v = CorrelationVolume::new(Tensor::zeros(&[1, 1, 1, 1]), VolumeKind::Dot).unwrap();
        assert!(normalize_volume(&v, &p).is_err());
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let (f1, f2) = (random_map(14, 2, 2, 3), random_map(15, 2, 2, 3));
        let p = CfaParams::orthogonal(1, 3, 2);
        for normalized in [false, true] {
            let g = cfa_backward(&f1, &f2, &p, &Tensor::zeros(&[2, 2, 2, 2]), normalized).unwrap();
            assert_eq!(g.f1.max_abs() + g.f2.max_abs(), 0.0);
            assert!(g.projections.iter().all(|t| t.max_abs() == 0.0));
            assert_eq!((g.norm_gain, g.norm_bias), (0.0, 0.0));
        }
    }

    #[test]
    fn identity_mode_gradient_is_bilinear() {
        let (f1, f2) = (random_map(16, 2, 3, 4), random_map(17, 2, 3, 4));
        let mut rng = seeded(18);
        let up = uniform_tensor(&mut rng, &[2, 3, 2, 3], 1.0);
        let g = cfa_backward(&f1, &f2, &CfaParams::identity(4, 1), &up, false).unwrap();
        for p in 0..6 {
            for c in 0..4 {
                let expect: f64 = (0..6).map(|q| up.data()[p * 6 + q] * f2.at(q / 3, q % 3)[c]).sum::<f64>() / 2.0;
                assert!((g.f1.data()[p * 4 + c] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heatmap_corner_truncates() {
        let f = random_map(19, 40, 40, 3);
        let c = dot_correlation(&f, &f).unwrap();
        let hm = extract_query_heatmap(&c, (0, 0), 256, 8).unwrap();
        assert_eq!(hm.window, CropWindow { row: 0, col: 0, rows: 16, cols: 16 });
        let hm = extract_query_heatmap(&c, (39, 20), 256, 8).unwrap();
        assert_eq!(hm.window, CropWindow { row: 23, col: 4, rows: 17, cols: 32 });
        assert!(matches!(extract_query_heatmap(&c, (40, 0), 256, 8), Err(crate::Error::Parameter(_))));
    }

    #[test]
    fn heatmap_one_hot_peak() {
        let f = one_hot_2x2();
        let c = dot_correlation(&f, &f).unwrap();
        let hm = extract_query_heatmap(&c, (1, 0), 256, 8).unwrap();
        assert_eq!(hm.window, CropWindow { row: 0, col: 0, rows: 2, cols: 2 });
        assert_eq!(hm.values.data(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn heatmap_matches_rescaled_slice() {
        let (f1, f2) = (random_map(20, 6, 7, 3), random_map(21, 6, 7, 3));
        let c = dot_correlation(&f1, &f2).unwrap();
        let hm = extract_query_heatmap(&c, (3, 2), 32, 8).unwrap();
        assert_eq!(hm.window, CropWindow { row: 1, col: 0, rows: 4, cols: 4 });
        let mut slice = Vec::new();
        for m in 1..5 {
            for n in 0..4 {
                slice.push(c.get(3, 2, m, n));
            }
        }
        let lo = slice.iter().cloned().fold(f64::MAX, f64::min);
        let hi = slice.iter().cloned().fold(f64::MIN, f64::max);
        for (got, s) in hm.values.data().iter().zip(&slice) {
            assert!((got - (s - lo) / (hi - lo)).abs() < 1e-15);
        }
    }
}
