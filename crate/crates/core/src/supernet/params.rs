use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::SampledArch;
use super::space::{BlockRef, Branch, ResolvedOp, SupernetSpec, View, FUSED_MB_EXPANSION};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Named weight tensors, ordered by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Params {
    tensors: BTreeMap<String, Tensor>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars across all tensors.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }
}

/// Name and shape of one weight tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
    pub is_bias: bool,
}

pub fn block_prefix(b: BlockRef) -> String {
    format!("{}/{}/{}", b.view, b.branch, b.index)
}

pub fn view_param(view: View, part: &str) -> String {
    format!("{view}/{part}")
}

fn conv(out: &mut Vec<ParamSpec>, name: String, o: usize, c: usize, k: usize) {
    out.push(ParamSpec {
        name: format!("{name}.w"),
        shape: vec![o, c, k, k],
        fan_in: c * k * k,
        is_bias: false,
    });
    out.push(ParamSpec {
        name: format!("{name}.b"),
        shape: vec![o],
        fan_in: c * k * k,
        is_bias: true,
    });
}

fn dense(out: &mut Vec<ParamSpec>, name: String, n_in: usize, n_out: usize) {
    out.push(ParamSpec {
        name: format!("{name}.w"),
        shape: vec![n_in, n_out],
        fan_in: n_in,
        is_bias: false,
    });
    out.push(ParamSpec {
        name: format!("{name}.b"),
        shape: vec![n_out],
        fan_in: n_in,
        is_bias: true,
    });
}

/// Weights of one concrete operator instance.
pub fn op_params(prefix: &str, op: ResolvedOp, c_in: usize, c_out: usize) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    match op {
        ResolvedOp::Conv3x3 => conv(&mut out, format!("{prefix}/conv"), c_out, c_in, 3),
        ResolvedOp::FusedMb => {
            let hidden = c_out * FUSED_MB_EXPANSION;
            conv(&mut out, format!("{prefix}/fmb.expand"), hidden, c_in, 3);
            conv(&mut out, format!("{prefix}/fmb.project"), c_out, hidden, 1);
        }
        ResolvedOp::Conv1x1 => conv(&mut out, format!("{prefix}/skip"), c_out, c_in, 1),
        ResolvedOp::Identity => {}
    }
    out
}

/// Branch output widths per view, used to size the fixed heads.
struct HeadInputs {
    latent: usize,
    gaze: Option<usize>,
    keypoint: Option<usize>,
}

fn fixed_params(spec: &SupernetSpec, heads: &[HeadInputs]) -> Vec<ParamSpec> {
    let d = &spec.dims;
    let mut out = Vec::new();
    for (v, h) in spec.views.iter().zip(heads) {
        let view = v.view;
        conv(&mut out, view_param(view, "stem"), d.stem_channels, 1, 3);
        conv(&mut out, view_param(view, "early"), d.early_channels, d.stem_channels, 3);
        dense(&mut out, view_param(view, "latent_head"), h.latent, d.feature_dim);
        if let Some(g) = h.gaze {
            dense(&mut out, view_param(view, "gaze_head"), g, d.gaze_per_eye);
        }
        if let Some(k) = h.keypoint {
            conv(&mut out, view_param(view, "keypoint_head"), d.keypoint_values_per_eye(), k, 1);
        }
    }
    let n = spec.views.len();
    dense(&mut out, "head".into(), n * d.feature_dim, d.latent_dim);
    dense(&mut out, "early_head".into(), n * d.early_channels, d.latent_dim);
    out
}

/// Every weight of the supernet: all candidate operators at maximal width.
pub fn supernet_layout(spec: &SupernetSpec) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    for g in spec.blocks() {
        let prefix = block_prefix(g.block);
        for &op in &spec.space.operators {
            out.extend(op_params(&prefix, g.resolve(op), g.max_in, g.max_out));
        }
    }
    let last = |v: &super::space::ViewSpec, b: Branch| {
        v.branch(b).map(|bs| {
            bs.last().map_or_else(
                || match b {
                    Branch::Backbone => spec.dims.stem_channels,
                    _ => v.backbone.last().map_or(spec.dims.stem_channels, |x| x.max_channels),
                },
                |x| x.max_channels,
            )
        })
    };
    let heads: Vec<HeadInputs> = spec
        .views
        .iter()
        .map(|v| HeadInputs {
            latent: last(v, Branch::Latent).unwrap(),
            gaze: last(v, Branch::Gaze),
            keypoint: last(v, Branch::Keypoint),
        })
        .collect();
    out.extend(fixed_params(spec, &heads));
    out
}

/// Weights of one discrete architecture at its concrete widths.
pub fn arch_layout(spec: &SupernetSpec, arch: &SampledArch) -> Result<Vec<ParamSpec>> {
    let plans = arch.plan(spec)?;
    let mut out = Vec::new();
    for p in &plans {
        for b in &p.blocks {
            out.extend(op_params(&block_prefix(b.geom.block), b.resolved, b.c_in, b.c_out));
        }
    }
    let heads: Vec<HeadInputs> = plans
        .iter()
        .map(|p| HeadInputs {
            latent: p.output(Branch::Latent).unwrap().channels,
            gaze: p.output(Branch::Gaze).map(|o| o.channels),
            keypoint: p.output(Branch::Keypoint).map(|o| o.channels),
        })
        .collect();
    out.extend(fixed_params(spec, &heads));
    Ok(out)
}

/// Gaussian weights scaled by `sqrt(2 / fan_in)`, zero biases.
pub fn init_params<R: Rng + ?Sized>(layout: &[ParamSpec], rng: &mut R) -> Params {
    let mut p = Params::new();
    for s in layout {
        let t = if s.is_bias {
            Tensor::zeros(&s.shape)
        } else {
            Tensor::randn(&s.shape, (2.0 / s.fan_in as f64).sqrt(), rng)
        };
        p.insert(s.name.clone(), t);
    }
    p
}

/// Leading hyper-rectangle of `t` with the given shape.
fn slice_leading(t: &Tensor, shape: &[usize]) -> Option<Tensor> {
    let full = t.shape();
    if full.len() != shape.len() || shape.iter().zip(full).any(|(s, f)| s > f) {
        return None;
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..n {
        let flat = idx.iter().zip(full).fold(0, |acc, (&i, &f)| acc * f + i);
        data.push(t.data()[flat]);
        for d in (0..shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::new(shape.to_vec(), data).ok()
}

/// Extracts the weights a discrete architecture inherits from the supernet.
pub fn slice_for_arch(spec: &SupernetSpec, arch: &SampledArch, supernet: &Params) -> Result<Params> {
    let mut out = Params::new();
    for s in arch_layout(spec, arch)? {
        let src = supernet
            .get(&s.name)
            .ok_or_else(|| Error::MissingParam(s.name.clone()))?;
        let t = slice_leading(src, &s.shape).ok_or_else(|| Error::ParamShape {
            name: s.name.clone(),
            expected: s.shape.clone(),
            got: src.shape().to_vec(),
        })?;
        out.insert(s.name, t);
    }
    Ok(out)
}

/// Checks that `params` holds exactly the tensors of `layout`.
pub fn check_layout(params: &Params, layout: &[ParamSpec]) -> Result<()> {
    for s in layout {
        let t = params
            .get(&s.name)
            .ok_or_else(|| Error::MissingParam(s.name.clone()))?;
        if t.shape() != s.shape.as_slice() {
            return Err(Error::ParamShape {
                name: s.name.clone(),
                expected: s.shape.clone(),
                got: t.shape().to_vec(),
            });
        }
    }
    Ok(())
}
