use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::supernet::{
    scaled_channels, strided_size, BlockGeom, BlockWeights, Branch, Operator, ResolvedOp,
    SampledArch, SupernetSpec, View, FUSED_MB_EXPANSION,
};
use crate::tensor::{Graph, NodeId, Tensor};

pub const LUT_COLUMNS: [&str; 7] = [
    "view",
    "branch",
    "block",
    "op",
    "scale",
    "resolution",
    "latency_ms",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LutError {
    #[error("latency table lacks column `{0}`")]
    MissingColumn(String),
    #[error("latency table row {row}: {message}")]
    BadRow { row: u64, message: String },
    #[error("latency table row {row}: negative latency {value}")]
    Negative { row: u64, value: f64 },
    #[error("latency table rows {first} and {second} both define {key}")]
    Duplicate { first: u64, second: u64, key: String },
    #[error("latency table has no entry for {0}")]
    MissingEntry(String),
    #[error("latency table: {0}")]
    Csv(String),
}

/// Identifies one (block, operator, scale, resolution) measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatencyKey {
    pub view: View,
    pub branch: Branch,
    pub block: usize,
    pub op: Operator,
    scale_bits: u64,
    pub resolution: usize,
}

impl LatencyKey {
    pub fn new(view: View, branch: Branch, block: usize, op: Operator, scale: f64, resolution: usize) -> Self {
        Self {
            view,
            branch,
            block,
            op,
            scale_bits: scale.to_bits(),
            resolution,
        }
    }

    pub fn for_block(g: &BlockGeom, op: Operator, scale: f64, resolution: usize) -> Self {
        Self::new(g.block.view, g.block.branch, g.block.index, op, scale, resolution)
    }

    pub fn scale(&self) -> f64 {
        f64::from_bits(self.scale_bits)
    }
}

impl fmt::Display for LatencyKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "view={} branch={} block={} op={} scale={} resolution={}",
            self.view,
            self.branch,
            self.block,
            self.op,
            self.scale(),
            self.resolution
        )
    }
}

/// Per-operator cost factors of a synthetic device, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceModel {
    pub name: String,
    pub ms_per_mflop_conv: f64,
    pub ms_per_mflop_fused_mb: f64,
    pub ms_per_mflop_conv1x1: f64,
    /// Fixed launch cost of every executed layer.
    pub layer_overhead_ms: f64,
}

impl Default for DeviceModel {
    fn default() -> Self {
        Self {
            name: "synthetic-mobile".into(),
            ms_per_mflop_conv: 0.010,
            ms_per_mflop_fused_mb: 0.012,
            ms_per_mflop_conv1x1: 0.016,
            layer_overhead_ms: 0.002,
        }
    }
}

/// Device latency lookup table over searchable blocks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatencyLut {
    entries: BTreeMap<LatencyKey, f64>,
    /// `# key: value` lines preceding the table.
    pub metadata: Vec<(String, String)>,
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, row: u64, col: &str) -> std::result::Result<T, LutError> {
    let raw = rec.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|_| LutError::BadRow {
        row,
        message: format!("cannot parse {col} `{raw}`"),
    })
}

impl LatencyLut {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: LatencyKey, ms: f64) {
        self.entries.insert(key, ms);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LatencyKey, &f64)> {
        self.entries.iter()
    }

    pub fn device(&self) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == "device")
            .map(|(_, v)| v.as_str())
    }

    pub fn get(&self, key: &LatencyKey) -> Result<f64> {
        self.entries
            .get(key)
            .copied()
            .ok_or_else(|| LutError::MissingEntry(key.to_string()).into())
    }

    pub fn from_csv_str(src: &str) -> Result<Self> {
        let metadata = src
            .lines()
            .map(str::trim)
            .take_while(|l| l.starts_with('#') || l.is_empty())
            .filter_map(|l| {
                let (k, v) = l.trim_start_matches('#').split_once(':')?;
                Some((k.trim().to_string(), v.trim().to_string()))
            })
            .collect();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(src.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| LutError::Csv(e.to_string()))?
            .clone();
        let mut idx = [0usize; 7];
        for (slot, col) in idx.iter_mut().zip(LUT_COLUMNS) {
            *slot = headers
                .iter()
                .position(|h| h == col)
                .ok_or_else(|| LutError::MissingColumn(col.to_string()))?;
        }
        let mut entries = BTreeMap::new();
        let mut rows: BTreeMap<LatencyKey, u64> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| LutError::Csv(e.to_string()))?;
            let row = rec.position().map_or(0, |p| p.line());
            let text = |i: usize| rec.get(idx[i]).unwrap_or("").trim().to_string();
            let view = View::parse(&text(0)).ok_or_else(|| LutError::BadRow {
                row,
                message: format!("unknown view `{}`", text(0)),
            })?;
            let branch = Branch::parse(&text(1)).ok_or_else(|| LutError::BadRow {
                row,
                message: format!("unknown branch `{}`", text(1)),
            })?;
            let op = Operator::parse(&text(3)).ok_or_else(|| LutError::BadRow {
                row,
                message: format!("unknown operator `{}`", text(3)),
            })?;
            let block: usize = parse_field(&rec, idx[2], row, "block")?;
            let scale: f64 = parse_field(&rec, idx[4], row, "scale")?;
            let resolution: usize = parse_field(&rec, idx[5], row, "resolution")?;
            let ms: f64 = parse_field(&rec, idx[6], row, "latency_ms")?;
            if !ms.is_finite() {
                return Err(LutError::BadRow {
                    row,
                    message: format!("non-finite latency {ms}"),
                }
                .into());
            }
            if ms < 0.0 {
                return Err(LutError::Negative { row, value: ms }.into());
            }
            let key = LatencyKey::new(view, branch, block, op, scale, resolution);
            if let Some(&first) = rows.get(&key) {
                return Err(LutError::Duplicate {
                    first,
                    second: row,
                    key: key.to_string(),
                }
                .into());
            }
            rows.insert(key, row);
            entries.insert(key, ms);
        }
        Ok(Self { entries, metadata })
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(LUT_COLUMNS).expect("in-memory write");
        for (k, ms) in &self.entries {
            w.write_record([
                k.view.to_string(),
                k.branch.to_string(),
                k.block.to_string(),
                k.op.to_string(),
                k.scale().to_string(),
                k.resolution.to_string(),
                ms.to_string(),
            ])
            .expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"));
        out
    }

    /// Fails on the first (block, operator, scale, resolution) without an entry.
    pub fn check_coverage(&self, spec: &SupernetSpec) -> Result<()> {
        for g in spec.blocks() {
            for &op in &spec.space.operators {
                for &s in &spec.space.channel_scales {
                    for &r in &spec.space.resolutions {
                        self.get(&LatencyKey::for_block(&g, op, s, r))?;
                    }
                }
            }
        }
        Ok(())
    }

    /// `[operators, scales]` table of one block at one resolution.
    pub fn block_table(&self, spec: &SupernetSpec, g: &BlockGeom, resolution: usize) -> Result<Tensor> {
        let mut data = Vec::new();
        for &op in &spec.space.operators {
            for &s in &spec.space.channel_scales {
                data.push(self.get(&LatencyKey::for_block(g, op, s, resolution))?);
            }
        }
        Ok(Tensor::new(
            vec![spec.space.operators.len(), spec.space.channel_scales.len()],
            data,
        )?)
    }

    /// Sum of the LUT entries of every block chosen by `arch`.
    pub fn score_arch(&self, spec: &SupernetSpec, arch: &SampledArch) -> Result<f64> {
        arch.validate(spec)?;
        let res = arch.resolutions();
        let parts = spec
            .blocks()
            .iter()
            .zip(arch.choices())
            .map(|(g, (op, s))| self.get(&LatencyKey::for_block(g, op, s, res[g.view_index])))
            .collect::<Result<Vec<f64>>>()?;
        Ok(parts.iter().sum())
    }

    /// Lowest achievable latency over the whole space.
    pub fn minimal_latency(&self, spec: &SupernetSpec) -> Result<f64> {
        let geoms = spec.blocks();
        let mut total = 0.0;
        for vi in 0..spec.views.len() {
            let mut best = f64::INFINITY;
            for &r in &spec.space.resolutions {
                let mut t = 0.0;
                for g in geoms.iter().filter(|g| g.view_index == vi) {
                    let mut m = f64::INFINITY;
                    for &op in &spec.space.operators {
                        for &s in &spec.space.channel_scales {
                            m = m.min(self.get(&LatencyKey::for_block(g, op, s, r))?);
                        }
                    }
                    t += m;
                }
                best = best.min(t);
            }
            total += best;
        }
        Ok(total)
    }

    /// Rejects budgets below the cheapest architecture's latency.
    pub fn check_budget(&self, spec: &SupernetSpec, budget_ms: f64) -> Result<()> {
        let minimal_ms = self.minimal_latency(spec)?;
        if budget_ms < minimal_ms {
            return Err(Error::InfeasibleBudget {
                budget_ms,
                minimal_ms,
            });
        }
        Ok(())
    }

    /// Synthetic table: per-layer overhead plus FLOPs times an operator factor.
    ///
    /// A block's input width is approximated by its own scale applied to its
    /// maximal input width, since the table cannot depend on the previous block.
    pub fn synthetic(spec: &SupernetSpec, device: &DeviceModel) -> Self {
        let mut lut = Self::new();
        lut.metadata.push(("device".into(), device.name.clone()));
        lut.metadata.push(("source".into(), "synthetic cost model".into()));
        let geoms = spec.blocks();
        for &r in &spec.space.resolutions {
            let sizes = input_sizes(spec, r);
            for (g, &size) in geoms.iter().zip(&sizes) {
                let out = strided_size(size, g.stride);
                for &op in &spec.space.operators {
                    for &s in &spec.space.channel_scales {
                        let c_in = scaled_channels(s, g.max_in);
                        let c_out = scaled_channels(s, g.max_out);
                        let px = (out * out) as f64;
                        let mflops = |macs: f64| 2.0 * macs / 1e6;
                        let ms = match g.resolve(op) {
                            ResolvedOp::Identity => 0.0,
                            ResolvedOp::Conv3x3 => {
                                device.layer_overhead_ms
                                    + device.ms_per_mflop_conv * mflops(px * (c_in * c_out * 9) as f64)
                            }
                            ResolvedOp::Conv1x1 => {
                                device.layer_overhead_ms
                                    + device.ms_per_mflop_conv1x1 * mflops(px * (c_in * c_out) as f64)
                            }
                            ResolvedOp::FusedMb => {
                                let h = c_out * FUSED_MB_EXPANSION;
                                2.0 * device.layer_overhead_ms
                                    + device.ms_per_mflop_fused_mb
                                        * mflops(px * (c_in * h * 9 + h * c_out) as f64)
                            }
                        };
                        lut.insert(LatencyKey::for_block(g, op, s, r), ms);
                    }
                }
            }
        }
        lut
    }
}

/// Input spatial size of every block when its view runs at `resolution`.
pub fn input_sizes(spec: &SupernetSpec, resolution: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for v in &spec.views {
        let mut trunk = resolution;
        for (branch, bs) in v.branches() {
            let mut size = if branch == Branch::Backbone { resolution } else { trunk };
            for b in bs {
                out.push(size);
                size = strided_size(size, b.stride);
            }
            if branch == Branch::Backbone {
                trunk = size;
            }
        }
    }
    out
}

/// Differentiable `Σ_blocks w_opᵀ · L · w_ch` at the given per-view resolutions.
///
/// With one-hot weights this reproduces [`LatencyLut::score_arch`] exactly.
pub fn expected_latency(
    g: &mut Graph,
    lut: &LatencyLut,
    spec: &SupernetSpec,
    weights: &[BlockWeights],
    resolutions: &[usize],
) -> Result<NodeId> {
    let geoms = spec.blocks();
    if weights.len() != geoms.len() || resolutions.len() != spec.views.len() {
        return Err(Error::InvalidArgument(
            "expected one weight pair per block and one resolution per view".into(),
        ));
    }
    let (n_ops, n_scales) = (spec.space.operators.len(), spec.space.channel_scales.len());
    let mut parts = Vec::with_capacity(geoms.len());
    for (geom, w) in geoms.iter().zip(weights) {
        let table = g.constant(lut.block_table(spec, geom, resolutions[geom.view_index])?);
        let row = g.reshape(w.op, &[1, n_ops])?;
        let col = g.reshape(w.channel, &[n_scales, 1])?;
        let t = g.matmul(row, table)?;
        let t = g.matmul(t, col)?;
        parts.push(g.reshape(t, &[1])?);
    }
    let all = g.concat(&parts, 0)?;
    Ok(g.sum(all)?)
}
