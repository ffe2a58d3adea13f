//! Semantic smoothing transformer: expanded (multi-mode) self-attention over
//! one frame's features, with a relative position bias on the attention
//! logits and a weighted skip connection.
//!
//! Each mode is single-head scaled dot-product attention with query, key,
//! value and output projections. Mode outputs are blended per pixel by a
//! softmax over scalar mode scores. One position-bias matrix is shared by
//! all modes and is added before the softmax.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::features::FeatureMap;
use crate::rng::{seeded, uniform_tensor};
use crate::tensor::Tensor;

pub const DEFAULT_MODES: usize = 4;
pub const DEFAULT_RADIUS: usize = 7;
pub const DEFAULT_SKIP_WEIGHT: f64 = 0.5;

/// Projections of one mode, each `D x D`, applied to row vectors (`x Q`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModeParams {
    pub query: Tensor,
    pub key: Tensor,
    pub value: Tensor,
    pub output: Tensor,
}

impl ModeParams {
    fn dim(&self) -> usize {
        self.query.shape()[0]
    }

    fn check(&self, d: usize) -> Result<()> {
        for (name, m) in self.named() {
            if m.shape() != [d, d] {
                bail!(Dimension, "{name} projection is {:?}, expected {d}x{d}", m.shape());
            }
        }
        Ok(())
    }

    pub fn named(&self) -> [(&'static str, &Tensor); 4] {
        [("query", &self.query), ("key", &self.key), ("value", &self.value), ("output", &self.output)]
    }

    fn zeros(d: usize) -> Self {
        let z = Tensor::zeros(&[d, d]);
        ModeParams { query: z.clone(), key: z.clone(), value: z.clone(), output: z }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedAttentionParams {
    pub modes: Vec<ModeParams>,
    /// `N x D`; row `k` scores mode `k`'s output at each pixel.
    pub scorers: Tensor,
    /// `[N]` offsets added to the mode scores.
    pub scorer_bias: Tensor,
    /// `(2r+1) x (2r+1)`, indexed by (row offset + r, column offset + r).
    pub position_bias: Tensor,
    pub radius: usize,
    pub skip_weight: f64,
}

impl ExpandedAttentionParams {
    /// Fresh parameters: uniform projections scaled by `1/sqrt(D)`, zero
    /// position bias, skip weight 0.5.
    pub fn init(seed: u64, channels: usize, modes: usize, radius: usize) -> Result<Self> {
        if channels == 0 || modes == 0 {
            bail!(Parameter, "channel and mode counts must be positive");
        }
        let mut rng = seeded(seed);
        let s = 1.0 / libm::sqrt(channels as f64);
        let modes = (0..modes)
            .map(|_| ModeParams {
                query: uniform_tensor(&mut rng, &[channels, channels], s),
                key: uniform_tensor(&mut rng, &[channels, channels], s),
                value: uniform_tensor(&mut rng, &[channels, channels], s),
                output: uniform_tensor(&mut rng, &[channels, channels], s),
            })
            .collect::<Vec<_>>();
        let n = modes.len();
        let side = 2 * radius + 1;
        Ok(ExpandedAttentionParams {
            modes,
            scorers: uniform_tensor(&mut rng, &[n, channels], s),
            scorer_bias: Tensor::zeros(&[n]),
            position_bias: Tensor::zeros(&[side, side]),
            radius,
            skip_weight: DEFAULT_SKIP_WEIGHT,
        })
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn channels(&self) -> usize {
        self.modes.first().map_or(0, ModeParams::dim)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.modes.len();
        if n == 0 {
            bail!(Parameter, "expanded attention needs at least one mode");
        }
        let d = self.channels();
        for m in &self.modes {
            m.check(d)?;
        }
        if self.scorers.shape() != [n, d] {
            bail!(Dimension, "mode scorers are {:?}, expected {n}x{d}", self.scorers.shape());
        }
        if self.scorer_bias.shape() != [n] {
            bail!(Dimension, "scorer bias is {:?}, expected [{n}]", self.scorer_bias.shape());
        }
        let side = 2 * self.radius + 1;
        if self.position_bias.shape() != [side, side] {
            bail!(
                Dimension,
                "position bias is {:?}, expected {side}x{side} for radius {}",
                self.position_bias.shape(),
                self.radius
            );
        }
        if !self.skip_weight.is_finite() {
            bail!(NonFinite, "skip weight is {}", self.skip_weight);
        }
        Ok(())
    }
}

/// Gradients of a scalar loss with respect to every input of
/// [`sstrans_forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct SstransGradients {
    /// Same `[H, W, D]` layout as the input features.
    pub input: Tensor,
    pub modes: Vec<ModeParams>,
    pub scorers: Tensor,
    pub scorer_bias: Tensor,
    pub position_bias: Tensor,
    pub skip_weight: f64,
}

fn check_input(x: &FeatureMap, d: usize) -> Result<()> {
    if x.channels() != d {
        bail!(Dimension, "features have {} channels, projections expect {d}", x.channels());
    }
    Ok(())
}

/// Calls `f(p, q, bias_index)` for every pixel pair inside the bias window.
fn for_each_biased_pair(h: usize, w: usize, radius: usize, mut f: impl FnMut(usize, usize, usize)) {
    let r = radius as i64;
    let side = 2 * radius + 1;
    for i in 0..h as i64 {
        for j in 0..w as i64 {
            let p = (i * w as i64 + j) as usize;
            for dx in -r..=r {
                let m = i + dx;
                if m < 0 || m >= h as i64 {
                    continue;
                }
                for dy in -r..=r {
                    let n = j + dy;
                    if n < 0 || n >= w as i64 {
                        continue;
                    }
                    let q = (m * w as i64 + n) as usize;
                    f(p, q, (dx + r) as usize * side + (dy + r) as usize);
                }
            }
        }
    }
}

/// Pre-softmax logits `(x Q)(x K)^T / sqrt(D)` with the relative position
/// bias added inside the radius window. Shape `(H*W) x (H*W)`.
pub fn attention_logits(x: &FeatureMap, mode: &ModeParams, bias: &Tensor, radius: usize) -> Result<Tensor> {
    let d = mode.dim();
    mode.check(d)?;
    check_input(x, d)?;
    let side = 2 * radius + 1;
    if bias.shape() != [side, side] {
        bail!(Dimension, "position bias is {:?}, expected {side}x{side}", bias.shape());
    }
    let xm = x.to_matrix();
    let q = xm.matmul(&mode.query)?;
    let k = xm.matmul(&mode.key)?;
    Ok(biased_logits(&q, &k, bias, x.height(), x.width(), radius))
}

fn biased_logits(q: &Tensor, k: &Tensor, bias: &Tensor, h: usize, w: usize, radius: usize) -> Tensor {
    let d = q.shape()[1];
    let p = h * w;
    let mut logits = q.matmul(&k.transpose().expect("2-D")).expect("shapes agree").scale(1.0 / libm::sqrt(d as f64));
    let b = bias.data();
    let data = logits.data_mut();
    for_each_biased_pair(h, w, radius, |a, c, bi| data[a * p + c] += b[bi]);
    logits
}

struct ModeCache {
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// Row-softmaxed attention.
    probs: Tensor,
    /// `probs * v`
    mixed: Tensor,
    /// `mixed * O`
    out: Tensor,
}

fn mode_forward(xm: &Tensor, mode: &ModeParams, bias: &Tensor, h: usize, w: usize, radius: usize) -> Result<ModeCache> {
    let q = xm.matmul(&mode.query)?;
    let k = xm.matmul(&mode.key)?;
    let v = xm.matmul(&mode.value)?;
    let probs = biased_logits(&q, &k, bias, h, w, radius).softmax(1)?;
    let mixed = probs.matmul(&v)?;
    let out = mixed.matmul(&mode.output)?;
    Ok(ModeCache { q, k, v, probs, mixed, out })
}

/// One mode's self-attention over all pixels of `x`.
pub fn mode_self_attention(x: &FeatureMap, mode: &ModeParams, bias: &Tensor, radius: usize) -> Result<FeatureMap> {
    let d = mode.dim();
    mode.check(d)?;
    check_input(x, d)?;
    let side = 2 * radius + 1;
    if bias.shape() != [side, side] {
        bail!(Dimension, "position bias is {:?}, expected {side}x{side}", bias.shape());
    }
    let cache = mode_forward(&x.to_matrix(), mode, bias, x.height(), x.width(), radius)?;
    FeatureMap::from_matrix(x.height(), x.width(), cache.out)
}

struct EaCache {
    modes: Vec<ModeCache>,
    /// `P x N` mode weights.
    gates: Tensor,
    /// `P x D` blended output.
    out: Tensor,
}

fn ea_forward(x: &FeatureMap, p: &ExpandedAttentionParams) -> Result<EaCache> {
    p.validate()?;
    check_input(x, p.channels())?;
    let (h, w) = (x.height(), x.width());
    let xm = x.to_matrix();
    let modes = p
        .modes
        .iter()
        .map(|m| mode_forward(&xm, m, &p.position_bias, h, w, p.radius))
        .collect::<Result<Vec<_>>>()?;
    let (pix, d, n) = (h * w, p.channels(), p.num_modes());
    let mut scores = vec![0.0; pix * n];
    for (k, cache) in modes.iter().enumerate() {
        let wk = &p.scorers.data()[k * d..(k + 1) * d];
        for (px, row) in cache.out.data().chunks(d).enumerate() {
            scores[px * n + k] = row.iter().zip(wk).map(|(a, b)| a * b).sum::<f64>() + p.scorer_bias.data()[k];
        }
    }
    let gates = Tensor::from_parts(vec![pix, n], scores).softmax(1)?;
    let mut out = vec![0.0; pix * d];
    for (k, cache) in modes.iter().enumerate() {
        for px in 0..pix {
            let g = gates.data()[px * n + k];
            for c in 0..d {
                out[px * d + c] += g * cache.out.data()[px * d + c];
            }
        }
    }
    Ok(EaCache { modes, gates, out: Tensor::from_parts(vec![pix, d], out) })
}

/// Per-pixel softmax blend of the mode outputs.
pub fn expanded_attention(x: &FeatureMap, p: &ExpandedAttentionParams) -> Result<FeatureMap> {
    let cache = ea_forward(x, p)?;
    FeatureMap::from_matrix(x.height(), x.width(), cache.out)
}

/// `w1 * x + (1 - w1) * EA(x)`.
pub fn sstrans_forward(x: &FeatureMap, p: &ExpandedAttentionParams) -> Result<FeatureMap> {
    let ea = ea_forward(x, p)?.out;
    let w1 = p.skip_weight;
    let data = x.values().data().iter().zip(ea.data()).map(|(&a, &e)| w1 * a + (1.0 - w1) * e).collect();
    FeatureMap::from_vec(x.height(), x.width(), x.channels(), data)
}

/// Reverse-mode gradients of `sum(upstream * sstrans_forward(x, p))`.
pub fn sstrans_backward(x: &FeatureMap, p: &ExpandedAttentionParams, upstream: &Tensor) -> Result<SstransGradients> {
    if upstream.shape() != x.values().shape() {
        bail!(
            Dimension,
            "upstream gradient is {:?}, forward output is {:?}",
            upstream.shape(),
            x.values().shape()
        );
    }
    let cache = ea_forward(x, p)?;
    let (h, w, d, n) = (x.height(), x.width(), x.channels(), p.num_modes());
    let pix = h * w;
    let w1 = p.skip_weight;
    let g = Tensor::from_parts(vec![pix, d], upstream.data().to_vec());
    let xm = x.to_matrix();

    let skip_weight = g.hadamard(&xm.sub(&cache.out)?)?.sum();
    let mut grad_x = g.scale(w1);
    let d_ea = g.scale(1.0 - w1);

    // Gate softmax: dG_k(p) = <dEA(p), Y_k(p)>.
    let mut d_gate = vec![0.0; pix * n];
    for (k, mc) in cache.modes.iter().enumerate() {
        for px in 0..pix {
            d_gate[px * n + k] = (0..d).map(|c| d_ea.data()[px * d + c] * mc.out.data()[px * d + c]).sum();
        }
    }
    let mut d_score = vec![0.0; pix * n];
    for px in 0..pix {
        let gates = &cache.gates.data()[px * n..(px + 1) * n];
        let dot: f64 = (0..n).map(|k| gates[k] * d_gate[px * n + k]).sum();
        for k in 0..n {
            d_score[px * n + k] = gates[k] * (d_gate[px * n + k] - dot);
        }
    }

    let mut scorers = vec![0.0; n * d];
    let mut scorer_bias = vec![0.0; n];
    let mut position_bias = Tensor::zeros(p.position_bias.shape());
    let mut modes = Vec::with_capacity(n);
    for (k, (mc, mp)) in cache.modes.iter().zip(&p.modes).enumerate() {
        let wk = &p.scorers.data()[k * d..(k + 1) * d];
        let mut d_out = vec![0.0; pix * d];
        for px in 0..pix {
            let gate = cache.gates.data()[px * n + k];
            let ds = d_score[px * n + k];
            scorer_bias[k] += ds;
            for c in 0..d {
                d_out[px * d + c] = gate * d_ea.data()[px * d + c] + ds * wk[c];
                scorers[k * d + c] += ds * mc.out.data()[px * d + c];
            }
        }
        let d_out = Tensor::from_parts(vec![pix, d], d_out);

        let mut grads = ModeParams::zeros(d);
        grads.output = mc.mixed.transpose()?.matmul(&d_out)?;
        let d_mixed = d_out.matmul(&mp.output.transpose()?)?;
        let d_probs = d_mixed.matmul(&mc.v.transpose()?)?;
        let d_v = mc.probs.transpose()?.matmul(&d_mixed)?;

        // Row softmax backward.
        let mut d_logits = vec![0.0; pix * pix];
        for a in 0..pix {
            let s = &mc.probs.data()[a * pix..(a + 1) * pix];
            let ds = &d_probs.data()[a * pix..(a + 1) * pix];
            let dot: f64 = s.iter().zip(ds).map(|(x, y)| x * y).sum();
            for c in 0..pix {
                d_logits[a * pix + c] = s[c] * (ds[c] - dot);
            }
        }
        let pb = position_bias.data_mut();
        for_each_biased_pair(h, w, p.radius, |a, c, bi| pb[bi] += d_logits[a * pix + c]);
        let d_logits = Tensor::from_parts(vec![pix, pix], d_logits).scale(1.0 / libm::sqrt(d as f64));
        let d_q = d_logits.matmul(&mc.k)?;
        let d_k = d_logits.transpose()?.matmul(&mc.q)?;

        let xt = xm.transpose()?;
        grads.query = xt.matmul(&d_q)?;
        grads.key = xt.matmul(&d_k)?;
        grads.value = xt.matmul(&d_v)?;
        grad_x = grad_x
            .add(&d_q.matmul(&mp.query.transpose()?)?)?
            .add(&d_k.matmul(&mp.key.transpose()?)?)?
            .add(&d_v.matmul(&mp.value.transpose()?)?)?;
        modes.push(grads);
    }

    Ok(SstransGradients {
        input: grad_x.reshape(&[h, w, d])?,
        modes,
        scorers: Tensor::from_parts(vec![n, d], scorers),
        scorer_bias: Tensor::from_parts(vec![n], scorer_bias),
        position_bias,
        skip_weight,
    })
}
