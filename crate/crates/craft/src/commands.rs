//! Subcommand bodies. Each takes a resolved [`RunConfig`] plus paths and
//! returns what it wrote, so tests can drive them without a process.

use std::path::{Path, PathBuf};

use craft_core::corr::{
    cfa_correlation, dot_correlation, extract_query_heatmap, normalize_volume, CfaParams, CorrelationVolume,
};
use craft_core::features::{generate_translated_scene, patchify_features, FeatureMap, Image, DEFAULT_PROJECTION_SEED};
use craft_core::gradcheck::{cfa_configs, check_cfa, check_sstrans, sstrans_configs, CfaCheck, GradCheckReport, SstransCheck};
use craft_core::matchattack::{run_attack_sweep, MatchPipeline, SweepRow};
use craft_core::metrics::metric_report;
use craft_core::sstrans::sstrans_forward;
use craft_core::{ExpandedAttentionParams, FlowField, MetricReport};

use crate::config::RunConfig;
use crate::error::{CraftError, Result};
use crate::formats::{feature_map, flo, pnm, volume, weights};
use crate::report::{self, GradCheckLine, HeatmapInfo, SceneInfo};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CraftError::io(dir, e))
}

fn cfa_from_config(cfg: &RunConfig) -> Result<CfaParams> {
    let p = CfaParams::orthogonal(cfg.seed, cfg.dims, cfg.cfa_modes);
    Ok(CfaParams::new(p.projections, cfg.norm_gain, cfg.norm_bias, cfg.norm_eps)?)
}

fn cfa_from(cfg: &RunConfig, weights_path: Option<&Path>) -> Result<CfaParams> {
    match weights_path {
        Some(path) => weights::load(path)?
            .cfa()?
            .ok_or_else(|| CraftError::Usage(format!("{} has no cfa.* records", path.display()))),
        None => cfa_from_config(cfg),
    }
}

/// Writes `I1.pgm`, `I2.pgm`, `gt.flo` and `scene.json` into `out_dir`.
pub fn gen(cfg: &RunConfig, out_dir: &Path) -> Result<SceneInfo> {
    let scene = generate_translated_scene(cfg.seed, cfg.width, cfg.height, cfg.displacement)?;
    create_dir(out_dir)?;
    pnm::save(&scene.frame1, &out_dir.join("I1.pgm"))?;
    pnm::save(&scene.frame2, &out_dir.join("I2.pgm"))?;
    flo::save(&scene.flow, &out_dir.join("gt.flo"))?;
    let info = SceneInfo {
        seed: cfg.seed,
        width: cfg.width,
        height: cfg.height,
        displacement: cfg.displacement,
        valid_pixels: scene.flow.valid_count(),
    };
    report::write_json(&info, &out_dir.join("scene.json"))?;
    Ok(info)
}

fn featurize_image(cfg: &RunConfig, img: &Image) -> Result<FeatureMap> {
    Ok(patchify_features(img, cfg.patch, cfg.dims, DEFAULT_PROJECTION_SEED)?)
}

/// Patch features of a PGM/PPM image.
pub fn featurize(cfg: &RunConfig, image: &Path, out: &Path) -> Result<FeatureMap> {
    let f = featurize_image(cfg, &pnm::load(image)?)?;
    feature_map::save(&f, out)?;
    Ok(f)
}

/// Seeded parameters for both layers in one weights file.
pub fn init_weights(cfg: &RunConfig, out: &Path) -> Result<weights::WeightsFile> {
    let mut sp = ExpandedAttentionParams::init(cfg.seed, cfg.dims, cfg.modes, cfg.radius)?;
    sp.skip_weight = cfg.skip_weight;
    sp.validate()?;
    let mut w = weights::WeightsFile::default();
    w.add_sstrans(&sp);
    w.add_cfa(&cfa_from_config(cfg)?);
    weights::save(&w, out)?;
    Ok(w)
}

fn load_sstrans(path: &Path) -> Result<ExpandedAttentionParams> {
    weights::load(path)?
        .sstrans()?
        .ok_or_else(|| CraftError::Usage(format!("{} has no sstrans.* records", path.display())))
}

/// Applies the semantic smoothing transformer to a feature file.
pub fn sstrans(features: &Path, weights_path: &Path, out: &Path) -> Result<FeatureMap> {
    let x = feature_map::load(features)?;
    let y = sstrans_forward(&x, &load_sstrans(weights_path)?)?;
    feature_map::save(&y, out)?;
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrMode {
    Dot,
    Cfa,
}

/// Which frames pass through the transformer before correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SstransApply {
    #[default]
    None,
    Frame2,
    /// Experimental; used only to compare heatmaps.
    Both,
}

#[derive(Debug, Clone)]
pub struct CorrArgs {
    pub features1: PathBuf,
    pub features2: PathBuf,
    pub weights: Option<PathBuf>,
    pub mode: CorrMode,
    pub sstrans: SstransApply,
    pub out: PathBuf,
}

pub fn corr(cfg: &RunConfig, args: &CorrArgs) -> Result<CorrelationVolume> {
    let mut f1 = feature_map::load(&args.features1)?;
    let mut f2 = feature_map::load(&args.features2)?;
    let file = args.weights.as_deref().map(weights::load).transpose()?;
    let need = |what: &str| CraftError::Usage(format!("{what} requires --weights"));

    if args.sstrans != SstransApply::None {
        let p = file.as_ref().ok_or_else(|| need("--sstrans"))?.sstrans()?.ok_or_else(|| {
            CraftError::Usage("weights file has no sstrans.* records".into())
        })?;
        f2 = sstrans_forward(&f2, &p)?;
        if args.sstrans == SstransApply::Both {
            f1 = sstrans_forward(&f1, &p)?;
        }
    }
    let cfa = file.as_ref().map(|w| w.cfa()).transpose()?.flatten();
    let c = match args.mode {
        CorrMode::Dot => dot_correlation(&f1, &f2)?,
        CorrMode::Cfa => {
            let p = cfa.as_ref().ok_or_else(|| need("--mode cfa"))?;
            cfa_correlation(&f1, &f2, p)?
        }
    };
    let c = if cfg.normalize {
        let p = match cfa {
            Some(p) => p,
            None => CfaParams::new(CfaParams::identity(f1.channels(), 1).projections, cfg.norm_gain, cfg.norm_bias, cfg.norm_eps)?,
        };
        normalize_volume(&c, &p)?
    } else {
        c
    };
    volume::save(&c, &args.out)?;
    Ok(c)
}

/// The sidecar JSON sits next to `out` with a `.json` extension.
pub fn heatmap(cfg: &RunConfig, volume_path: &Path, query: (usize, usize), out: &Path) -> Result<HeatmapInfo> {
    let c = volume::load(volume_path)?;
    let h = extract_query_heatmap(&c, query, cfg.fov, cfg.scale)?;
    let samples = h.values.data().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    let img = Image::new(h.window.cols, h.window.rows, 1, samples)?;
    pnm::save(&img, out)?;
    let info = HeatmapInfo { query, fov: cfg.fov, scale: cfg.scale, window: h.window };
    report::write_json(&info, &out.with_extension("json"))?;
    Ok(info)
}

fn pipeline(cfg: &RunConfig, weights_path: Option<&Path>) -> Result<MatchPipeline> {
    let mut p = MatchPipeline::new(cfg.patch, cfg.dims, cfa_from(cfg, weights_path)?);
    p.normalize = cfg.normalize;
    Ok(p)
}

/// Pixel-resolution flow from the exhaustive matcher.
pub fn match_flow(cfg: &RunConfig, image1: &Path, image2: &Path, weights_path: Option<&Path>, out: &Path) -> Result<FlowField> {
    let f = pipeline(cfg, weights_path)?.estimate(&pnm::load(image1)?, &pnm::load(image2)?)?;
    flo::save(&f, out)?;
    Ok(f)
}

/// Sweep over the configured shifts on a freshly generated scene; writes
/// JSONL to `out` and optionally CSV.
pub fn attack(cfg: &RunConfig, weights_path: Option<&Path>, out: &Path, csv: Option<&Path>) -> Result<Vec<SweepRow>> {
    let sweep = cfg.sweep_config()?;
    let scene = generate_translated_scene(cfg.seed, cfg.width, cfg.height, cfg.displacement)?;
    let rows = run_attack_sweep(&sweep, &scene, &pipeline(cfg, weights_path)?)?;
    report::write_jsonl(&rows, out)?;
    if let Some(csv) = csv {
        report::write_sweep_csv(&rows, csv)?;
    }
    Ok(rows)
}

fn line(r: &GradCheckReport) -> GradCheckLine {
    GradCheckLine {
        label: r.label.clone(),
        checked: r.checked,
        max_rel_error: r.max_rel_error,
        mismatches: r.mismatches.len(),
        passed: r.passed(),
    }
}

/// Without `sizes`, runs the seeded default suite (15 sstrans and 15 cfa
/// configurations). With sizes, one sstrans check and a plain and a
/// normalized cfa check per `HxWxD`. `perturb` is a negative-control hook.
pub fn gradcheck(cfg: &RunConfig, sizes: Option<&[(usize, usize, usize)]>, perturb: f64) -> Result<Vec<GradCheckLine>> {
    let (mut s, mut c): (Vec<SstransCheck>, Vec<CfaCheck>) = match sizes {
        None => (sstrans_configs(cfg.seed, 15), cfa_configs(cfg.seed, 15)),
        Some(list) => {
            let mut s = Vec::new();
            let mut c = Vec::new();
            for (i, &(height, width, channels)) in list.iter().enumerate() {
                let seed = cfg.seed.wrapping_add(i as u64);
                s.push(SstransCheck { seed, height, width, channels, modes: cfg.modes, radius: cfg.radius, perturb: 0.0 });
                for normalized in [false, true] {
                    c.push(CfaCheck { seed, height, width, channels, modes: cfg.cfa_modes, normalized, perturb: 0.0 });
                }
            }
            (s, c)
        }
    };
    s.iter_mut().for_each(|x| x.perturb = perturb);
    c.iter_mut().for_each(|x| x.perturb = perturb);
    let mut lines = Vec::with_capacity(s.len() + c.len());
    for x in &s {
        lines.push(line(&check_sstrans(x)?));
    }
    for x in &c {
        lines.push(line(&check_cfa(x)?));
    }
    Ok(lines)
}

pub fn ensure_passed(lines: &[GradCheckLine]) -> Result<()> {
    let failed: Vec<&str> = lines.iter().filter(|l| !l.passed).map(|l| l.label.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CraftError::CheckFailed(format!("{} of {} gradient checks failed: {}", failed.len(), lines.len(), failed.join("; "))))
    }
}

/// Foreground mask: any non-zero PGM sample marks a foreground pixel.
pub fn metrics(pred: &Path, gt: &Path, foreground: Option<&Path>, out: Option<&Path>) -> Result<MetricReport> {
    let pred = flo::load(pred)?;
    let gt = flo::load(gt)?;
    let mask = foreground
        .map(|p| -> Result<Vec<bool>> {
            let img = pnm::load(p)?;
            if img.channels() != 1 {
                return Err(CraftError::Usage(format!("{}: foreground mask must be a PGM", p.display())));
            }
            Ok(img.samples().iter().map(|&s| s != 0).collect())
        })
        .transpose()?;
    let r = metric_report(&pred, &gt, mask.as_deref())?;
    if let Some(out) = out {
        report::write_json(&r, out)?;
    }
    Ok(r)
}
