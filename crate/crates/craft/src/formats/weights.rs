//! Named tensor records (CRWT) and the mapping between records and layer
//! parameters.
//!
//! Record names: `sstrans.mode{k}.{query,key,value,output}`,
//! `sstrans.scorers`, `sstrans.scorer_bias`, `sstrans.position_bias`,
//! `sstrans.skip_weight`, `cfa.proj{k}`, `cfa.norm_gain`, `cfa.norm_bias`,
//! `cfa.norm_eps`.

use std::collections::HashSet;
use std::path::Path;

use craft_core::{CfaParams, ExpandedAttentionParams, ModeParams, Tensor};

use super::bytes::{dim_u32, positive_dim, push_f32, Reader};
use super::{at, read_file, write_file};
use crate::error::{CraftError, FormatError, Result};

pub const MAGIC: &str = "CRWT";

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightsFile {
    pub records: Vec<Record>,
}

impl WeightsFile {
    pub fn get(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        self.records.iter().any(|r| r.name.starts_with(prefix))
    }

    fn push(&mut self, name: String, t: &Tensor) {
        self.records.push(Record { name, dims: t.shape().to_vec(), data: t.data().to_vec() });
    }

    fn push_scalar(&mut self, name: &str, v: f64) {
        self.records.push(Record { name: name.into(), dims: vec![1], data: vec![v] });
    }

    pub fn add_sstrans(&mut self, p: &ExpandedAttentionParams) {
        for (k, m) in p.modes.iter().enumerate() {
            for (which, t) in m.named() {
                self.push(format!("sstrans.mode{k}.{which}"), t);
            }
        }
        self.push("sstrans.scorers".into(), &p.scorers);
        self.push("sstrans.scorer_bias".into(), &p.scorer_bias);
        self.push("sstrans.position_bias".into(), &p.position_bias);
        self.push_scalar("sstrans.skip_weight", p.skip_weight);
    }

    pub fn add_cfa(&mut self, p: &CfaParams) {
        for (k, w) in p.projections.iter().enumerate() {
            self.push(format!("cfa.proj{k}"), w);
        }
        self.push_scalar("cfa.norm_gain", p.norm_gain);
        self.push_scalar("cfa.norm_bias", p.norm_bias);
        self.push_scalar("cfa.norm_eps", p.norm_eps);
    }

    fn tensor(&self, name: &str) -> Result<Tensor> {
        let r = self.get(name).ok_or_else(|| CraftError::Usage(format!("weights file has no record {name:?}")))?;
        Ok(Tensor::new(r.dims.clone(), r.data.clone())?)
    }

    fn scalar(&self, name: &str) -> Result<f64> {
        let t = self.tensor(name)?;
        if t.len() != 1 {
            return Err(CraftError::Usage(format!("record {name:?} must hold one value, has {}", t.len())));
        }
        Ok(t.data()[0])
    }

    fn count(&self, prefix: &str) -> usize {
        (0..).take_while(|k| self.has_prefix(&format!("{prefix}{k}"))).count()
    }

    /// `None` when the file carries no `sstrans.*` records.
    pub fn sstrans(&self) -> Result<Option<ExpandedAttentionParams>> {
        if !self.has_prefix("sstrans.") {
            return Ok(None);
        }
        let modes = (0..self.count("sstrans.mode"))
            .map(|k| {
                Ok(ModeParams {
                    query: self.tensor(&format!("sstrans.mode{k}.query"))?,
                    key: self.tensor(&format!("sstrans.mode{k}.key"))?,
                    value: self.tensor(&format!("sstrans.mode{k}.value"))?,
                    output: self.tensor(&format!("sstrans.mode{k}.output"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let position_bias = self.tensor("sstrans.position_bias")?;
        let radius = position_bias.shape()[0] / 2;
        let p = ExpandedAttentionParams {
            modes,
            scorers: self.tensor("sstrans.scorers")?,
            scorer_bias: self.tensor("sstrans.scorer_bias")?,
            position_bias,
            radius,
            skip_weight: self.scalar("sstrans.skip_weight")?,
        };
        p.validate()?;
        Ok(Some(p))
    }

    /// `None` when the file carries no `cfa.*` records.
    pub fn cfa(&self) -> Result<Option<CfaParams>> {
        if !self.has_prefix("cfa.") {
            return Ok(None);
        }
        let projections = (0..self.count("cfa.proj"))
            .map(|k| self.tensor(&format!("cfa.proj{k}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(CfaParams::new(
            projections,
            self.scalar("cfa.norm_gain")?,
            self.scalar("cfa.norm_bias")?,
            self.scalar("cfa.norm_eps")?,
        )?))
    }
}

pub fn encode(w: &WeightsFile) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    out.extend_from_slice(&dim_u32(w.records.len(), out.len(), "record count")?.to_le_bytes());
    let mut seen = HashSet::new();
    for r in &w.records {
        if !seen.insert(r.name.as_str()) {
            return Err(FormatError::Invalid { offset: out.len(), what: "record name", detail: format!("duplicate {:?}", r.name) });
        }
        let n: usize = r.dims.iter().product();
        if n != r.data.len() || r.dims.contains(&0) {
            return Err(FormatError::Invalid {
                offset: out.len(),
                what: "record payload",
                detail: format!("{:?} holds {} values under dims {:?}", r.name, r.data.len(), r.dims),
            });
        }
        out.extend_from_slice(&dim_u32(r.name.len(), out.len(), "name length")?.to_le_bytes());
        out.extend_from_slice(r.name.as_bytes());
        out.extend_from_slice(&dim_u32(r.dims.len(), out.len(), "rank")?.to_le_bytes());
        for &d in &r.dims {
            out.extend_from_slice(&dim_u32(d, out.len(), "dimension")?.to_le_bytes());
        }
        for &v in &r.data {
            push_f32(&mut out, v)?;
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<WeightsFile, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let count = r.u32("record count")? as usize;
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let off = r.offset();
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "record name")?)
            .map_err(|e| FormatError::Invalid { offset: off + 4, what: "record name", detail: e.to_string() })?
            .to_owned();
        if !seen.insert(name.clone()) {
            return Err(FormatError::Invalid { offset: off, what: "record name", detail: format!("duplicate {name:?}") });
        }
        let off = r.offset();
        let rank = r.u32("rank")? as usize;
        if rank == 0 {
            return Err(FormatError::Invalid { offset: off, what: "rank", detail: "must be positive".into() });
        }
        let mut dims = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            let off = r.offset();
            dims.push(positive_dim(r.u32("dimension")?, off, "dimension")?);
        }
        let off = r.offset();
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(FormatError::Invalid { offset: off, what: "dimension", detail: "size overflows".into() })?;
        let data = r.finite_f32s(n, "record payload")?.into_iter().map(f64::from).collect();
        records.push(Record { name, dims, data });
    }
    r.finish()?;
    Ok(WeightsFile { records })
}

pub fn save(w: &WeightsFile, path: &Path) -> Result<()> {
    let bytes = encode(w).map_err(at(path))?;
    write_file(path, &bytes)
}

pub fn load(path: &Path) -> Result<WeightsFile> {
    decode(&read_file(path)?).map_err(at(path))
}
