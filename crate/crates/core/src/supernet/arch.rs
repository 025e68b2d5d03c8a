use serde::{Deserialize, Serialize};

use super::space::{
    scaled_channels, strided_size, BlockGeom, Branch, Operator, ResolvedOp, SupernetSpec, View,
    FUSED_MB_EXPANSION,
};
use crate::error::{Error, Result};

/// One discrete encoder drawn from the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledArch {
    pub views: Vec<ViewArch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewArch {
    pub view: View,
    pub resolution: usize,
    pub branches: Vec<BranchArch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchArch {
    pub branch: Branch,
    pub operators: Vec<Operator>,
    pub channel_scales: Vec<f64>,
}

/// A block of a discrete architecture with its concrete widths and sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedBlock {
    pub geom: BlockGeom,
    pub op: Operator,
    pub scale: f64,
    pub resolved: ResolvedOp,
    pub c_in: usize,
    pub c_out: usize,
    /// Fused-MBConv hidden width; zero for other operators.
    pub hidden: usize,
    pub in_size: usize,
    pub out_size: usize,
}

/// Concrete output width and spatial size of every branch of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchOutput {
    pub branch: Branch,
    pub channels: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewPlan {
    pub view: View,
    pub resolution: usize,
    pub blocks: Vec<PlannedBlock>,
    pub outputs: Vec<BranchOutput>,
}

impl ViewPlan {
    pub fn output(&self, b: Branch) -> Option<&BranchOutput> {
        self.outputs.iter().find(|o| o.branch == b)
    }
}

impl SampledArch {
    /// Builds an architecture from per-block choices aligned with `spec.blocks()`.
    pub fn from_choices(
        spec: &SupernetSpec,
        choices: &[(Operator, f64)],
        resolutions: &[usize],
    ) -> Result<Self> {
        let geoms = spec.blocks();
        if choices.len() != geoms.len() || resolutions.len() != spec.views.len() {
            return Err(Error::InvalidArch(format!(
                "expected {} block choices and {} resolutions, got {} and {}",
                geoms.len(),
                spec.views.len(),
                choices.len(),
                resolutions.len()
            )));
        }
        let mut it = choices.iter();
        let views = spec
            .views
            .iter()
            .zip(resolutions)
            .map(|(v, &resolution)| ViewArch {
                view: v.view,
                resolution,
                branches: v
                    .branches()
                    .into_iter()
                    .map(|(branch, bs)| {
                        let picked: Vec<_> = it.by_ref().take(bs.len()).collect();
                        BranchArch {
                            branch,
                            operators: picked.iter().map(|c| c.0).collect(),
                            channel_scales: picked.iter().map(|c| c.1).collect(),
                        }
                    })
                    .collect(),
            })
            .collect();
        let arch = SampledArch { views };
        arch.validate(spec)?;
        Ok(arch)
    }

    /// Largest operator, full width and highest resolution everywhere.
    pub fn largest(spec: &SupernetSpec) -> Self {
        let op = *spec
            .space
            .operators
            .iter()
            .max_by_key(|o| o.cost_rank())
            .expect("validated space");
        Self::uniform(spec, op, *spec.space.channel_scales.last().unwrap(), *spec.space.resolutions.last().unwrap())
    }

    /// Every architecture of the space, or `None` beyond `limit`.
    pub fn enumerate(spec: &SupernetSpec, limit: usize) -> Option<Vec<SampledArch>> {
        let s = &spec.space;
        let per_block = s.operators.len() * s.channel_scales.len();
        let (nb, nv) = (spec.blocks().len(), spec.views.len());
        let mut total: usize = 1;
        for _ in 0..nb {
            total = total.checked_mul(per_block)?;
        }
        for _ in 0..nv {
            total = total.checked_mul(s.resolutions.len())?;
        }
        if total > limit {
            return None;
        }
        let mut out = Vec::with_capacity(total);
        for mut k in 0..total {
            let mut choices = Vec::with_capacity(nb);
            for _ in 0..nb {
                let c = k % per_block;
                k /= per_block;
                choices.push((s.operators[c / s.channel_scales.len()], s.channel_scales[c % s.channel_scales.len()]));
            }
            let mut res = Vec::with_capacity(nv);
            for _ in 0..nv {
                res.push(s.resolutions[k % s.resolutions.len()]);
                k /= s.resolutions.len();
            }
            out.push(Self::from_choices(spec, &choices, &res).expect("choices from the space"));
        }
        Some(out)
    }

    /// Same choice in every block and view.
    pub fn uniform(spec: &SupernetSpec, op: Operator, scale: f64, resolution: usize) -> Self {
        let n = spec.blocks().len();
        Self::from_choices(spec, &vec![(op, scale); n], &vec![resolution; spec.views.len()])
            .expect("uniform choices match the spec")
    }

    pub fn validate(&self, spec: &SupernetSpec) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArch(m));
        if self.views.len() != spec.views.len() {
            return fail(format!(
                "expected {} views, got {}",
                spec.views.len(),
                self.views.len()
            ));
        }
        for (va, vs) in self.views.iter().zip(&spec.views) {
            if va.view != vs.view {
                return fail(format!("expected view {}, got {}", vs.view, va.view));
            }
            if spec.space.resolution_index(va.resolution).is_none() {
                return fail(format!(
                    "{}: resolution {} is not a candidate",
                    va.view, va.resolution
                ));
            }
            let want = vs.branches();
            if va.branches.len() != want.len() {
                return fail(format!("{}: expected {} branches", va.view, want.len()));
            }
            for (ba, (b, bs)) in va.branches.iter().zip(want) {
                if ba.branch != b {
                    return fail(format!("{}: expected branch {}, got {}", va.view, b, ba.branch));
                }
                if ba.operators.len() != bs.len() || ba.channel_scales.len() != bs.len() {
                    return fail(format!("{}/{}: expected {} blocks", va.view, b, bs.len()));
                }
                if let Some(op) = ba
                    .operators
                    .iter()
                    .find(|&&o| spec.space.op_index(o).is_none())
                {
                    return fail(format!("{}/{}: operator {} is not a candidate", va.view, b, op));
                }
                if let Some(s) = ba
                    .channel_scales
                    .iter()
                    .find(|&&s| spec.space.scale_index(s).is_none())
                {
                    return fail(format!("{}/{}: channel scale {} is not a candidate", va.view, b, s));
                }
            }
        }
        Ok(())
    }

    /// Per-block choices aligned with `spec.blocks()`.
    pub fn choices(&self) -> Vec<(Operator, f64)> {
        self.views
            .iter()
            .flat_map(|v| &v.branches)
            .flat_map(|b| b.operators.iter().copied().zip(b.channel_scales.iter().copied()))
            .collect()
    }

    pub fn resolutions(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.resolution).collect()
    }

    /// Concrete channel widths and spatial sizes of every block.
    pub fn plan(&self, spec: &SupernetSpec) -> Result<Vec<ViewPlan>> {
        self.validate(spec)?;
        let choices = self.choices();
        let geoms = spec.blocks();
        let mut cursor = 0;
        let mut plans = Vec::with_capacity(spec.views.len());
        for (va, vs) in self.views.iter().zip(&spec.views) {
            let stem = spec.dims.stem_channels;
            let mut blocks = Vec::new();
            let mut outputs = Vec::new();
            let mut trunk = (stem, va.resolution);
            for (branch, bs) in vs.branches() {
                let (mut c, mut size) = if branch == Branch::Backbone {
                    (stem, va.resolution)
                } else {
                    trunk
                };
                for _ in bs {
                    let geom = geoms[cursor];
                    let (op, scale) = choices[cursor];
                    cursor += 1;
                    let resolved = geom.resolve(op);
                    let c_out = match resolved {
                        ResolvedOp::Identity => c,
                        _ => scaled_channels(scale, geom.max_out),
                    };
                    let hidden = match resolved {
                        ResolvedOp::FusedMb => c_out * FUSED_MB_EXPANSION,
                        _ => 0,
                    };
                    let out_size = strided_size(size, geom.stride);
                    blocks.push(PlannedBlock {
                        geom,
                        op,
                        scale,
                        resolved,
                        c_in: c,
                        c_out,
                        hidden,
                        in_size: size,
                        out_size,
                    });
                    c = c_out;
                    size = out_size;
                }
                if branch == Branch::Backbone {
                    trunk = (c, size);
                }
                outputs.push(BranchOutput {
                    branch,
                    channels: c,
                    size,
                });
            }
            plans.push(ViewPlan {
                view: va.view,
                resolution: va.resolution,
                blocks,
                outputs,
            });
        }
        Ok(plans)
    }
}

/// Learnable logits of one searchable block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedBlockParams {
    pub op_logits: Vec<f64>,
    pub channel_logits: Vec<f64>,
}

/// Index of the largest value; ties go to the candidate with the smallest `cost`.
fn argmax_by_cost<K: Ord>(values: &[f64], cost: impl Fn(usize) -> K) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] || (values[i] == values[best] && cost(i) < cost(best)) {
            best = i;
        }
    }
    best
}

/// Argmax architecture of the given logits.
///
/// Ties prefer the cheaper candidate: lower operator cost rank, smaller channel
/// scale, lower resolution.
pub fn derive_arch(
    spec: &SupernetSpec,
    blocks: &[MixedBlockParams],
    resolution_logits: &[Vec<f64>],
) -> Result<SampledArch> {
    let space = &spec.space;
    let n_blocks = spec.blocks().len();
    if blocks.len() != n_blocks || resolution_logits.len() != spec.views.len() {
        return Err(Error::InvalidArch(format!(
            "expected logits for {} blocks and {} views",
            n_blocks,
            spec.views.len()
        )));
    }
    let mut choices = Vec::with_capacity(n_blocks);
    for b in blocks {
        if b.op_logits.len() != space.operators.len()
            || b.channel_logits.len() != space.channel_scales.len()
        {
            return Err(Error::InvalidArch("logit length does not match the space".into()));
        }
        let o = argmax_by_cost(&b.op_logits, |i| space.operators[i].cost_rank());
        let s = argmax_by_cost(&b.channel_logits, |i| i);
        choices.push((space.operators[o], space.channel_scales[s]));
    }
    let mut resolutions = Vec::with_capacity(spec.views.len());
    for r in resolution_logits {
        if r.len() != space.resolutions.len() {
            return Err(Error::InvalidArch("logit length does not match the space".into()));
        }
        resolutions.push(space.resolutions[argmax_by_cost(r, |i| i)]);
    }
    SampledArch::from_choices(spec, &choices, &resolutions)
}

/// Serialised architecture with per-branch resolved operators and FLOPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub views: Vec<ViewDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_mflops: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_mflops: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewDocument {
    pub view: View,
    pub input_resolution: usize,
    pub branches: Vec<BranchDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchDocument {
    pub branch: Branch,
    pub operators: Vec<Operator>,
    pub channel_scales: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_operators: Option<Vec<ResolvedOp>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mflops: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_mflops: Option<f64>,
}

impl ArchDocument {
    /// Describes `arch`, annotating resolved operators and counted MFLOPs.
    pub fn describe(name: Option<&str>, arch: &SampledArch, spec: &SupernetSpec) -> Result<Self> {
        let plans = arch.plan(spec)?;
        let report = crate::cost::count_flops(spec, arch)?;
        let views = arch
            .views
            .iter()
            .zip(&plans)
            .map(|(va, plan)| ViewDocument {
                view: va.view,
                input_resolution: va.resolution,
                branches: va
                    .branches
                    .iter()
                    .map(|ba| BranchDocument {
                        branch: ba.branch,
                        operators: ba.operators.clone(),
                        channel_scales: ba.channel_scales.clone(),
                        resolved_operators: Some(
                            plan.blocks
                                .iter()
                                .filter(|b| b.geom.block.branch == ba.branch)
                                .map(|b| b.resolved)
                                .collect(),
                        ),
                        mflops: Some(report.branch_mflops(va.view, ba.branch)),
                        reported_mflops: None,
                    })
                    .collect(),
            })
            .collect();
        Ok(Self {
            name: name.map(str::to_string),
            views,
            total_mflops: Some(report.total_mflops()),
            reported_mflops: None,
        })
    }

    pub fn to_arch(&self, spec: &SupernetSpec) -> Result<SampledArch> {
        let arch = SampledArch {
            views: self
                .views
                .iter()
                .map(|v| ViewArch {
                    view: v.view,
                    resolution: v.input_resolution,
                    branches: v
                        .branches
                        .iter()
                        .map(|b| BranchArch {
                            branch: b.branch,
                            operators: b.operators.clone(),
                            channel_scales: b.channel_scales.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        arch.validate(spec)?;
        Ok(arch)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Reference encoders bundled with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    Large,
    Medium,
    Small,
}

impl Reference {
    pub const ALL: [Reference; 3] = [Reference::Large, Reference::Medium, Reference::Small];

    pub fn name(self) -> &'static str {
        match self {
            Reference::Large => "AVE-L",
            Reference::Medium => "AVE-M",
            Reference::Small => "AVE-S",
        }
    }

    pub fn parse(s: &str) -> Option<Reference> {
        Reference::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
    }

    pub fn document(self) -> ArchDocument {
        let src = match self {
            Reference::Large => include_str!("../../assets/ave-l.json"),
            Reference::Medium => include_str!("../../assets/ave-m.json"),
            Reference::Small => include_str!("../../assets/ave-s.json"),
        };
        ArchDocument::from_json(src).expect("bundled architecture parses")
    }

    pub fn arch(self) -> SampledArch {
        self.document()
            .to_arch(&SupernetSpec::full())
            .expect("bundled architecture fits the full-width spec")
    }
}
