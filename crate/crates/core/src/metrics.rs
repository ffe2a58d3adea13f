//! Flow accuracy: average end-point error, KITTI-style outlier rates and
//! error binned by ground-truth motion magnitude.
//!
//! Only pixels valid in both fields count. A pixel is an outlier when its
//! end-point error exceeds 3 px *and* 5% of the ground-truth magnitude.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::flow::FlowField;

pub const OUTLIER_ABS_PX: f64 = 3.0;
pub const OUTLIER_REL: f64 = 0.05;

/// Motion-magnitude bins, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MotionBin {
    Below1,
    From1To10,
    From10To20,
    From20To30,
    Above30,
    All,
}

impl MotionBin {
    pub const ALL: [MotionBin; 6] = [
        MotionBin::Below1,
        MotionBin::From1To10,
        MotionBin::From10To20,
        MotionBin::From20To30,
        MotionBin::Above30,
        MotionBin::All,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MotionBin::Below1 => "<1",
            MotionBin::From1To10 => "[1,10]",
            MotionBin::From10To20 => "(10,20]",
            MotionBin::From20To30 => "(20,30]",
            MotionBin::Above30 => ">30",
            MotionBin::All => "All",
        }
    }

    /// Magnitude bin; `[1,10]` is closed at both ends, the later bins are
    /// open below.
    pub fn of(magnitude: f64) -> MotionBin {
        if magnitude < 1.0 {
            MotionBin::Below1
        } else if magnitude <= 10.0 {
            MotionBin::From1To10
        } else if magnitude <= 20.0 {
            MotionBin::From10To20
        } else if magnitude <= 30.0 {
            MotionBin::From20To30
        } else {
            MotionBin::Above30
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BinStat {
    pub label: String,
    /// `None` when the bin is empty.
    pub aepe: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub aepe: f64,
    pub fl_all: f64,
    /// Present only when a foreground mask was supplied.
    pub fl_fg: Option<f64>,
    pub fl_bg: Option<f64>,
    pub binned: Vec<BinStat>,
    pub valid_pixels: usize,
}

fn epe(pred: &FlowField, gt: &FlowField, i: usize) -> f64 {
    libm::hypot(pred.u()[i] - gt.u()[i], pred.v()[i] - gt.v()[i])
}

fn gt_magnitude(gt: &FlowField, i: usize) -> f64 {
    libm::hypot(gt.u()[i], gt.v()[i])
}

fn joint_valid<'a>(pred: &'a FlowField, gt: &'a FlowField) -> impl Iterator<Item = usize> + 'a {
    let (a, b) = (pred.valid(), gt.valid());
    (0..a.len()).filter(move |&i| a[i] && b[i])
}

pub fn aepe(pred: &FlowField, gt: &FlowField) -> Result<f64> {
    pred.same_dims(gt, "aepe")?;
    let (mut sum, mut n) = (0.0, 0usize);
    for i in joint_valid(pred, gt) {
        sum += epe(pred, gt, i);
        n += 1;
    }
    if n == 0 {
        bail!(UndefinedMetric, "aepe over zero valid pixels");
    }
    Ok(sum / n as f64)
}

pub fn is_outlier(epe: f64, gt_magnitude: f64) -> bool {
    epe > OUTLIER_ABS_PX && epe > OUTLIER_REL * gt_magnitude
}

/// Fraction of jointly valid pixels (restricted to `region` when given)
/// that are outliers.
pub fn fl_outlier_rate(pred: &FlowField, gt: &FlowField, region: Option<&[bool]>) -> Result<f64> {
    pred.same_dims(gt, "fl_outlier_rate")?;
    if let Some(r) = region {
        if r.len() != gt.valid().len() {
            bail!(Dimension, "region mask has {} entries for {} pixels", r.len(), gt.valid().len());
        }
    }
    let (mut outliers, mut n) = (0usize, 0usize);
    for i in joint_valid(pred, gt) {
        if region.is_some_and(|r| !r[i]) {
            continue;
        }
        n += 1;
        if is_outlier(epe(pred, gt, i), gt_magnitude(gt, i)) {
            outliers += 1;
        }
    }
    if n == 0 {
        bail!(UndefinedMetric, "outlier rate over an empty region");
    }
    Ok(outliers as f64 / n as f64)
}

/// AEPE per motion-magnitude bin plus the overall `All` row. Empty bins
/// report a count of zero and no error value.
pub fn binned_aepe(pred: &FlowField, gt: &FlowField) -> Result<Vec<BinStat>> {
    pred.same_dims(gt, "binned_aepe")?;
    let mut sums = [0.0; 6];
    let mut counts = [0usize; 6];
    for i in joint_valid(pred, gt) {
        let e = epe(pred, gt, i);
        let b = MotionBin::of(gt_magnitude(gt, i)) as usize;
        sums[b] += e;
        counts[b] += 1;
        sums[MotionBin::All as usize] += e;
        counts[MotionBin::All as usize] += 1;
    }
    Ok(MotionBin::ALL
        .iter()
        .map(|&b| {
            let k = b as usize;
            BinStat {
                label: String::from(b.label()),
                aepe: (counts[k] > 0).then(|| sums[k] / counts[k] as f64),
                count: counts[k],
            }
        })
        .collect())
}

/// Every metric at once. `foreground` splits the outlier rate into
/// foreground and background parts.
pub fn metric_report(pred: &FlowField, gt: &FlowField, foreground: Option<&[bool]>) -> Result<MetricReport> {
    let aepe = aepe(pred, gt)?;
    let fl_all = fl_outlier_rate(pred, gt, None)?;
    let (fl_fg, fl_bg) = match foreground {
        Some(fg) => {
            let bg: Vec<bool> = fg.iter().map(|m| !m).collect();
            let rate = |mask: &[bool]| match fl_outlier_rate(pred, gt, Some(mask)) {
                Ok(r) => Ok(Some(r)),
                Err(crate::Error::UndefinedMetric(_)) => Ok(None),
                Err(e) => Err(e),
            };
            (rate(fg)?, rate(&bg)?)
        }
        None => (None, None),
    };
    Ok(MetricReport {
        aepe,
        fl_all,
        fl_fg,
        fl_bg,
        binned: binned_aepe(pred, gt)?,
        valid_pixels: joint_valid(pred, gt).count(),
    })
}
