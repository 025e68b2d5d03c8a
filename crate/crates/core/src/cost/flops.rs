use serde::Serialize;

use crate::error::Result;
use crate::supernet::{Branch, PlannedBlock, ResolvedOp, SampledArch, SupernetSpec, View};
use crate::supernet::strided_size;

/// Where a counted layer sits in the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Part {
    Stem,
    Block(usize),
    /// Fixed projection closing a branch.
    BranchHead,
    /// Joint head mapping concatenated view features to the latent code.
    Head,
    /// Early head used only to decide whether to extrapolate.
    Early,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlopsEntry {
    pub view: Option<View>,
    pub branch: Option<Branch>,
    pub part: Part,
    pub macs: u64,
}

impl FlopsEntry {
    /// One multiply-accumulate counts as two floating-point operations.
    pub fn mflops(&self) -> f64 {
        2.0 * self.macs as f64 / 1e6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlopsReport {
    pub entries: Vec<FlopsEntry>,
}

impl FlopsReport {
    fn mflops_where(&self, f: impl Fn(&FlopsEntry) -> bool) -> f64 {
        let macs: u64 = self.entries.iter().filter(|e| f(e)).map(|e| e.macs).sum();
        2.0 * macs as f64 / 1e6
    }

    /// Encoder total, excluding the early head.
    pub fn total_mflops(&self) -> f64 {
        self.mflops_where(|e| e.part != Part::Early)
    }

    pub fn searchable_mflops(&self) -> f64 {
        self.mflops_where(|e| matches!(e.part, Part::Block(_)))
    }

    pub fn fixed_mflops(&self) -> f64 {
        self.mflops_where(|e| !matches!(e.part, Part::Block(_) | Part::Early))
    }

    /// Stems plus the early head: the cost of deciding to extrapolate.
    pub fn early_path_mflops(&self) -> f64 {
        self.mflops_where(|e| matches!(e.part, Part::Early | Part::Stem))
    }

    /// A branch's blocks and its fixed head; the backbone includes the stem.
    pub fn branch_mflops(&self, view: View, branch: Branch) -> f64 {
        self.mflops_where(|e| e.view == Some(view) && e.branch == Some(branch) && e.part != Part::Early)
    }
}

fn conv_macs(c_in: usize, c_out: usize, out_size: usize, k: usize) -> u64 {
    (c_in * c_out * out_size * out_size * k * k) as u64
}

pub fn block_macs(b: &PlannedBlock) -> u64 {
    match b.resolved {
        ResolvedOp::Identity => 0,
        ResolvedOp::Conv3x3 => conv_macs(b.c_in, b.c_out, b.out_size, 3),
        ResolvedOp::Conv1x1 => conv_macs(b.c_in, b.c_out, b.out_size, 1),
        ResolvedOp::FusedMb => {
            conv_macs(b.c_in, b.hidden, b.out_size, 3) + conv_macs(b.hidden, b.c_out, b.out_size, 1)
        }
    }
}

/// Multiply-accumulate count of every layer of `arch`.
pub fn count_flops(spec: &SupernetSpec, arch: &SampledArch) -> Result<FlopsReport> {
    let d = &spec.dims;
    let mut entries = Vec::new();
    for plan in arch.plan(spec)? {
        let view = Some(plan.view);
        let r = plan.resolution;
        entries.push(FlopsEntry {
            view,
            branch: Some(Branch::Backbone),
            part: Part::Stem,
            macs: conv_macs(1, d.stem_channels, r, 3),
        });
        let e = strided_size(r, d.early_stride);
        entries.push(FlopsEntry {
            view,
            branch: None,
            part: Part::Early,
            macs: conv_macs(d.stem_channels, d.early_channels, e, 3)
                + (d.early_channels * d.latent_dim) as u64,
        });
        for b in &plan.blocks {
            entries.push(FlopsEntry {
                view,
                branch: Some(b.geom.block.branch),
                part: Part::Block(b.geom.block.index),
                macs: block_macs(b),
            });
        }
        for o in &plan.outputs {
            let macs = match o.branch {
                Branch::Backbone => continue,
                Branch::Latent => (o.channels * d.feature_dim) as u64,
                Branch::Gaze => (o.channels * d.gaze_per_eye) as u64,
                Branch::Keypoint => conv_macs(o.channels, d.keypoint_values_per_eye(), o.size, 1),
            };
            entries.push(FlopsEntry {
                view,
                branch: Some(o.branch),
                part: Part::BranchHead,
                macs,
            });
        }
    }
    entries.push(FlopsEntry {
        view: None,
        branch: None,
        part: Part::Head,
        macs: (spec.views.len() * d.feature_dim * d.latent_dim) as u64,
    });
    Ok(FlopsReport { entries })
}
