use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};

/// Per-pixel `(u, v)` displacements in pixels with a validity mask.
/// Row-major, `u` horizontal (along width), `v` vertical.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if width == 0 || height == 0 {
            bail!(Dimension, "flow field must be non-empty, got {width}x{height}");
        }
        if u.len() != n || v.len() != n || valid.len() != n {
            bail!(Dimension, "flow field {width}x{height} needs {n} entries per component");
        }
        for i in 0..n {
            if valid[i] && !(u[i].is_finite() && v[i].is_finite()) {
                bail!(NonFinite, "valid flow pixel {i} is ({}, {})", u[i], v[i]);
            }
        }
        Ok(FlowField { width, height, u, v, valid })
    }

    pub fn constant(width: usize, height: usize, u: f64, v: f64) -> Self {
        let n = width * height;
        FlowField { width, height, u: vec![u; n], v: vec![v; n], valid: vec![true; n] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&m| m).count()
    }

    pub fn at(&self, x: usize, y: usize) -> Option<(f64, f64)> {
        let i = y * self.width + x;
        self.valid[i].then(|| (self.u[i], self.v[i]))
    }

    /// Same field with the mask replaced by `mask AND other`.
    pub fn masked(mut self, other: &[bool]) -> Result<Self> {
        if other.len() != self.valid.len() {
            bail!(Dimension, "mask of {} entries for a {}x{} field", other.len(), self.width, self.height);
        }
        self.valid.iter_mut().zip(other).for_each(|(m, &o)| *m &= o);
        Ok(self)
    }

    /// Nearest-neighbour upsampling: each cell becomes a `factor x factor`
    /// block carrying the cell's flow.
    pub fn upsample(&self, factor: usize) -> FlowField {
        let (w, h) = (self.width * factor, self.height * factor);
        let mut out = FlowField { width: w, height: h, u: vec![0.0; w * h], v: vec![0.0; w * h], valid: vec![false; w * h] };
        for y in 0..h {
            for x in 0..w {
                let src = (y / factor) * self.width + x / factor;
                let dst = y * w + x;
                out.u[dst] = self.u[src];
                out.v[dst] = self.v[src];
                out.valid[dst] = self.valid[src];
            }
        }
        out
    }

    /// Translate the grid by `(dx, dy)`: output pixel `(x, y)` takes the
    /// vector at `(x - dx, y - dy)`. Pixels without a source become invalid.
    pub fn translate(&self, dx: i64, dy: i64) -> FlowField {
        let (w, h) = (self.width, self.height);
        let mut out = FlowField { width: w, height: h, u: vec![0.0; w * h], v: vec![0.0; w * h], valid: vec![false; w * h] };
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = (x as i64 - dx, y as i64 - dy);
                if sx < 0 || sy < 0 || sx >= w as i64 || sy >= h as i64 {
                    continue;
                }
                let src = sy as usize * w + sx as usize;
                let dst = y * w + x;
                if self.valid[src] {
                    out.u[dst] = self.u[src];
                    out.v[dst] = self.v[src];
                    out.valid[dst] = true;
                }
            }
        }
        out
    }

    /// Subtract a constant vector from every pixel.
    pub fn offset(&self, du: f64, dv: f64) -> FlowField {
        let mut out = self.clone();
        out.u.iter_mut().for_each(|u| *u -= du);
        out.v.iter_mut().for_each(|v| *v -= dv);
        out
    }

    pub(crate) fn same_dims(&self, other: &FlowField, what: &str) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            bail!(
                Dimension,
                "{what}: flow fields are {}x{} and {}x{}",
                self.width,
                self.height,
                other.width,
                other.height
            );
        }
        Ok(())
    }
}
