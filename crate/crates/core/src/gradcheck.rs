//! Analytic-versus-central-difference gradient checks for the two
//! differentiable layers. Used by the test suites and by `craft gradcheck`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::corr::{cfa_backward, cfa_correlation, normalize_volume, CfaParams};
use crate::error::Result;
use crate::features::FeatureMap;
use crate::rng::{seeded, uniform_tensor};
use crate::sstrans::{sstrans_backward, sstrans_forward, ExpandedAttentionParams};
use crate::tensor::{finite_difference_gradient, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_TOL: f64 = 1e-7;

pub fn within_tolerance(analytic: f64, numeric: f64) -> bool {
    let scale = analytic.abs().max(numeric.abs());
    (analytic - numeric).abs() <= (REL_TOL * scale).max(ABS_TOL)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub parameter: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub label: String,
    pub checked: usize,
    /// Largest `|a - n| / max(|a|, |n|)` among entries whose magnitude
    /// exceeds the absolute floor.
    pub max_rel_error: f64,
    pub mismatches: Vec<Mismatch>,
}

impl GradCheckReport {
    fn new(label: String) -> Self {
        GradCheckReport { label, checked: 0, max_rel_error: 0.0, mismatches: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    fn compare(&mut self, name: &str, analytic: &Tensor, numeric: &Tensor) {
        for (i, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
            self.checked += 1;
            let scale = a.abs().max(n.abs());
            if scale > ABS_TOL {
                self.max_rel_error = self.max_rel_error.max((a - n).abs() / scale);
            }
            if !within_tolerance(a, n) {
                self.mismatches.push(Mismatch { parameter: String::from(name), index: i, analytic: a, numeric: n });
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SstransCheck {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub modes: usize,
    pub radius: usize,
    /// Added to every analytic entry; non-zero only for negative controls.
    pub perturb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfaCheck {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub modes: usize,
    pub normalized: bool,
    pub perturb: f64,
}

fn scalar(v: f64) -> Tensor {
    Tensor::from_parts(alloc::vec![1], alloc::vec![v])
}

fn weighted_sum(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Random features, parameters (including a non-zero position bias) and
/// upstream weights; compares every gradient entry.
pub fn check_sstrans(cfg: &SstransCheck) -> Result<GradCheckReport> {
    let mut rng = seeded(cfg.seed);
    let x = FeatureMap::new(uniform_tensor(&mut rng, &[cfg.height, cfg.width, cfg.channels], 1.0))?;
    let mut p = ExpandedAttentionParams::init(cfg.seed.wrapping_add(1), cfg.channels, cfg.modes, cfg.radius)?;
    let side = 2 * cfg.radius + 1;
    p.position_bias = uniform_tensor(&mut rng, &[side, side], 1.0);
    p.scorer_bias = uniform_tensor(&mut rng, &[cfg.modes], 0.5);
    p.skip_weight = rng_weight(&mut rng);
    let up = uniform_tensor(&mut rng, x.values().shape(), 1.0);

    let grads = sstrans_backward(&x, &p, &up)?;
    let bump = |t: &Tensor| t.map(|v| v + cfg.perturb);
    let loss = |x: &FeatureMap, p: &ExpandedAttentionParams| {
        sstrans_forward(x, p).map(|y| weighted_sum(y.values(), &up)).unwrap_or(f64::NAN)
    };

    let mut report = GradCheckReport::new(format!(
        "sstrans seed={} {}x{}x{} modes={} radius={}",
        cfg.seed, cfg.height, cfg.width, cfg.channels, cfg.modes, cfg.radius
    ));

    let fd = finite_difference_gradient(|t| loss(&FeatureMap::new(t.clone()).unwrap(), &p), x.values(), FD_STEP)?;
    report.compare("input", &bump(&grads.input), &fd);

    for k in 0..cfg.modes {
        for (which, analytic) in grads.modes[k].named() {
            let base = p.modes[k].named().iter().find(|(n, _)| *n == which).map(|(_, t)| (*t).clone()).unwrap();
            let fd = finite_difference_gradient(
                |t| {
                    let mut q = p.clone();
                    let m = &mut q.modes[k];
                    match which {
                        "query" => m.query = t.clone(),
                        "key" => m.key = t.clone(),
                        "value" => m.value = t.clone(),
                        _ => m.output = t.clone(),
                    }
                    loss(&x, &q)
                },
                &base,
                FD_STEP,
            )?;
            report.compare(&format!("mode{k}.{which}"), &bump(analytic), &fd);
        }
    }

    let fd = finite_difference_gradient(|t| loss(&x, &ExpandedAttentionParams { scorers: t.clone(), ..p.clone() }), &p.scorers, FD_STEP)?;
    report.compare("scorers", &bump(&grads.scorers), &fd);
    let fd = finite_difference_gradient(
        |t| loss(&x, &ExpandedAttentionParams { scorer_bias: t.clone(), ..p.clone() }),
        &p.scorer_bias,
        FD_STEP,
    )?;
    report.compare("scorer_bias", &bump(&grads.scorer_bias), &fd);
    let fd = finite_difference_gradient(
        |t| loss(&x, &ExpandedAttentionParams { position_bias: t.clone(), ..p.clone() }),
        &p.position_bias,
        FD_STEP,
    )?;
    report.compare("position_bias", &bump(&grads.position_bias), &fd);
    let fd = finite_difference_gradient(
        |t| loss(&x, &ExpandedAttentionParams { skip_weight: t.data()[0], ..p.clone() }),
        &scalar(p.skip_weight),
        FD_STEP,
    )?;
    report.compare("skip_weight", &scalar(grads.skip_weight + cfg.perturb), &fd);
    Ok(report)
}

fn rng_weight(rng: &mut crate::rng::SeededRng) -> f64 {
    use rand::Rng;
    rng.gen_range(0.1..0.9)
}

/// Same procedure for the cross-frame attention volume, optionally through
/// the global normalization.
pub fn check_cfa(cfg: &CfaCheck) -> Result<GradCheckReport> {
    let mut rng = seeded(cfg.seed);
    let shape = [cfg.height, cfg.width, cfg.channels];
    let f1 = FeatureMap::new(uniform_tensor(&mut rng, &shape, 1.0))?;
    let f2 = FeatureMap::new(uniform_tensor(&mut rng, &shape, 1.0))?;
    let projections = (0..cfg.modes).map(|_| uniform_tensor(&mut rng, &[cfg.channels, cfg.channels], 1.0)).collect();
    let p = CfaParams::new(projections, 1.0 + rng_weight(&mut rng), rng_weight(&mut rng) - 0.5, 1e-6)?;
    let up = uniform_tensor(&mut rng, &[cfg.height, cfg.width, cfg.height, cfg.width], 1.0);

    let grads = cfa_backward(&f1, &f2, &p, &up, cfg.normalized)?;
    let bump = |t: &Tensor| t.map(|v| v + cfg.perturb);
    let loss = |a: &FeatureMap, b: &FeatureMap, p: &CfaParams| {
        let c = cfa_correlation(a, b, p).and_then(|c| if cfg.normalized { normalize_volume(&c, p) } else { Ok(c) });
        c.map(|c| weighted_sum(c.values(), &up)).unwrap_or(f64::NAN)
    };

    let mut report = GradCheckReport::new(format!(
        "cfa seed={} {}x{}x{} modes={} normalized={}",
        cfg.seed, cfg.height, cfg.width, cfg.channels, cfg.modes, cfg.normalized
    ));
    let fd = finite_difference_gradient(|t| loss(&FeatureMap::new(t.clone()).unwrap(), &f2, &p), f1.values(), FD_STEP)?;
    report.compare("f1", &bump(&grads.f1), &fd);
    let fd = finite_difference_gradient(|t| loss(&f1, &FeatureMap::new(t.clone()).unwrap(), &p), f2.values(), FD_STEP)?;
    report.compare("f2", &bump(&grads.f2), &fd);
    for k in 0..cfg.modes {
        let fd = finite_difference_gradient(
            |t| {
                let mut q = p.clone();
                q.projections[k] = t.clone();
                loss(&f1, &f2, &q)
            },
            &p.projections[k],
            FD_STEP,
        )?;
        report.compare(&format!("projection{k}"), &bump(&grads.projections[k]), &fd);
    }
    if cfg.normalized {
        let fd = finite_difference_gradient(
            |t| loss(&f1, &f2, &CfaParams { norm_gain: t.data()[0], ..p.clone() }),
            &scalar(p.norm_gain),
            FD_STEP,
        )?;
        report.compare("norm_gain", &scalar(grads.norm_gain + cfg.perturb), &fd);
        let fd = finite_difference_gradient(
            |t| loss(&f1, &f2, &CfaParams { norm_bias: t.data()[0], ..p.clone() }),
            &scalar(p.norm_bias),
            FD_STEP,
        )?;
        report.compare("norm_bias", &scalar(grads.norm_bias + cfg.perturb), &fd);
    }
    Ok(report)
}

/// Small configurations derived from a seed, cycling through shapes within
/// `H, W <= 4`, `D <= 6`, `N <= 3` for sstrans.
pub fn sstrans_configs(base_seed: u64, count: usize) -> Vec<SstransCheck> {
    (0..count)
        .map(|i| {
            let seed = base_seed.wrapping_add(i as u64);
            SstransCheck {
                seed,
                height: 1 + (i % 4),
                width: 1 + ((i / 2) % 4),
                channels: 2 + (i % 5),
                modes: 1 + (i % 3),
                radius: i % 3,
                perturb: 0.0,
            }
        })
        .collect()
}

/// Cycles through `H, W <= 3`, `D <= 4`, `K <= 3`, alternating the
/// normalization on and off.
pub fn cfa_configs(base_seed: u64, count: usize) -> Vec<CfaCheck> {
    (0..count)
        .map(|i| CfaCheck {
            seed: base_seed.wrapping_add(1000 + i as u64),
            height: 1 + (i % 3),
            width: 1 + ((i / 3) % 3),
            channels: 1 + (i % 4),
            modes: 1 + ((i / 2) % 3),
            normalized: i % 2 == 0,
            perturb: 0.0,
        })
        .collect()
}
