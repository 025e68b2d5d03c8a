use std::collections::HashMap;

use super::arch::{PlannedBlock, SampledArch};
use super::params::{block_prefix, view_param, Params};
use super::space::{scaled_channels, BlockGeom, Branch, ResolvedOp, SupernetSpec, View, FUSED_MB_EXPANSION};
use crate::error::{Error, Result};
use crate::tensor::{Gradients, Graph, NodeId, Tensor};

/// One grayscale image per view, each `[1, S, S]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViewImages {
    images: Vec<(View, Tensor)>,
}

impl ViewImages {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, view: View, image: Tensor) {
        match self.images.iter_mut().find(|(v, _)| *v == view) {
            Some(slot) => slot.1 = image,
            None => self.images.push((view, image)),
        }
    }

    pub fn get(&self, view: View) -> Option<&Tensor> {
        self.images.iter().find(|(v, _)| *v == view).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(View, Tensor)> {
        self.images.iter()
    }
}

/// Lazily turns named parameters into graph leaves, once per graph.
pub struct Binder<'p> {
    params: &'p Params,
    trainable: bool,
    ids: HashMap<String, NodeId>,
}

impl<'p> Binder<'p> {
    pub fn new(params: &'p Params, trainable: bool) -> Self {
        Self {
            params,
            trainable,
            ids: HashMap::new(),
        }
    }

    pub fn get(&mut self, g: &mut Graph, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.ids.get(name) {
            return Ok(id);
        }
        let t = self
            .params
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))?
            .clone();
        let id = if self.trainable {
            g.leaf(t.with_grad())
        } else {
            g.constant(t)
        };
        self.ids.insert(name.to_string(), id);
        Ok(id)
    }

    /// Gradients of every parameter bound so far.
    pub fn gradients(&self, grads: &Gradients) -> Params {
        let mut out = Params::new();
        for (name, &id) in &self.ids {
            if let Some(t) = grads.get(id) {
                out.insert(name.clone(), t.clone());
            }
        }
        out
    }
}

/// Relaxed choice weights of one block, both 1-D nodes.
#[derive(Debug, Clone, Copy)]
pub struct BlockWeights {
    pub op: NodeId,
    pub channel: NodeId,
}

/// Encoder outputs recorded on a graph.
#[derive(Debug, Clone)]
pub struct EncoderNodes {
    pub z: NodeId,
    /// Concatenated per-eye gaze, absent when no eye view is configured.
    pub gaze: Option<NodeId>,
    pub keypoints: Option<NodeId>,
    /// Latent estimate of the early head.
    pub early_z: Option<NodeId>,
    /// Per-view latent features before the joint head, in view order.
    pub view_features: Vec<NodeId>,
}

trait BlockRunner {
    fn run(
        &mut self,
        g: &mut Graph,
        binder: &mut Binder,
        pos: usize,
        geom: &BlockGeom,
        x: NodeId,
    ) -> Result<NodeId>;
}

fn conv_unit(
    g: &mut Graph,
    binder: &mut Binder,
    name: &str,
    x: NodeId,
    stride: usize,
    k: usize,
) -> Result<NodeId> {
    let w = binder.get(g, &format!("{name}.w"))?;
    let b = binder.get(g, &format!("{name}.b"))?;
    Ok(g.conv2d(x, w, Some(b), stride, k / 2)?)
}

/// Runs a concrete operator; `mask` (shape `[C, 1, 1]`) zeroes inactive channels.
fn run_op(
    g: &mut Graph,
    binder: &mut Binder,
    prefix: &str,
    op: ResolvedOp,
    x: NodeId,
    stride: usize,
    mask: Option<(NodeId, Option<NodeId>)>,
) -> Result<NodeId> {
    let masked = |g: &mut Graph, y: NodeId, m: Option<NodeId>| -> Result<NodeId> {
        Ok(match m {
            Some(m) => g.mul(y, m)?,
            None => y,
        })
    };
    let out_mask = mask.map(|m| m.0);
    match op {
        ResolvedOp::Identity => Ok(x),
        ResolvedOp::Conv3x3 => {
            let y = conv_unit(g, binder, &format!("{prefix}/conv"), x, stride, 3)?;
            let y = g.silu(y)?;
            masked(g, y, out_mask)
        }
        ResolvedOp::FusedMb => {
            let h = conv_unit(g, binder, &format!("{prefix}/fmb.expand"), x, stride, 3)?;
            let h = g.silu(h)?;
            let h = masked(g, h, mask.and_then(|m| m.1))?;
            let y = conv_unit(g, binder, &format!("{prefix}/fmb.project"), h, 1, 1)?;
            masked(g, y, out_mask)
        }
        ResolvedOp::Conv1x1 => {
            let y = conv_unit(g, binder, &format!("{prefix}/skip"), x, stride, 1)?;
            masked(g, y, out_mask)
        }
    }
}

/// Binary keep-masks, one row per candidate scale: `[S, width]`.
pub fn channel_masks(scales: &[f64], max: usize, unit: usize) -> Tensor {
    let mut data = Vec::with_capacity(scales.len() * max * unit);
    for &s in scales {
        let keep = scaled_channels(s, max) * unit;
        data.extend((0..max * unit).map(|c| if c < keep { 1.0 } else { 0.0 }));
    }
    Tensor::new(vec![scales.len(), max * unit], data).expect("non-empty masks")
}

struct MixedRunner<'a> {
    spec: &'a SupernetSpec,
    weights: &'a [BlockWeights],
}

impl MixedRunner<'_> {
    fn soft_mask(&self, g: &mut Graph, w: NodeId, width: usize, unit: usize) -> Result<NodeId> {
        let scales = &self.spec.space.channel_scales;
        let m = g.constant(channel_masks(scales, width, unit));
        let row = g.reshape(w, &[1, scales.len()])?;
        let soft = g.matmul(row, m)?;
        Ok(g.reshape(soft, &[width * unit, 1, 1])?)
    }
}

impl BlockRunner for MixedRunner<'_> {
    fn run(
        &mut self,
        g: &mut Graph,
        binder: &mut Binder,
        pos: usize,
        geom: &BlockGeom,
        x: NodeId,
    ) -> Result<NodeId> {
        let w = self.weights[pos];
        let prefix = block_prefix(geom.block);
        let ops = &self.spec.space.operators;
        let out_mask = self.soft_mask(g, w.channel, geom.max_out, 1)?;
        let hidden_mask = if FUSED_MB_EXPANSION == 1 {
            out_mask
        } else {
            self.soft_mask(g, w.channel, geom.max_out, FUSED_MB_EXPANSION)?
        };
        let mut rows = Vec::with_capacity(ops.len());
        let mut shape = Vec::new();
        for &op in ops {
            let y = run_op(
                g,
                binder,
                &prefix,
                geom.resolve(op),
                x,
                geom.stride,
                Some((out_mask, Some(hidden_mask))),
            )?;
            shape = g.value(y).shape().to_vec();
            let n = g.value(y).numel();
            rows.push(g.reshape(y, &[1, n])?);
        }
        let stacked = g.concat(&rows, 0)?;
        let wrow = g.reshape(w.op, &[1, ops.len()])?;
        let mixed = g.matmul(wrow, stacked)?;
        Ok(g.reshape(mixed, &shape)?)
    }
}

struct DiscreteRunner {
    blocks: Vec<PlannedBlock>,
}

impl BlockRunner for DiscreteRunner {
    fn run(
        &mut self,
        g: &mut Graph,
        binder: &mut Binder,
        pos: usize,
        geom: &BlockGeom,
        x: NodeId,
    ) -> Result<NodeId> {
        let b = &self.blocks[pos];
        run_op(g, binder, &block_prefix(geom.block), b.resolved, x, geom.stride, None)
    }
}

fn encode(
    g: &mut Graph,
    spec: &SupernetSpec,
    binder: &mut Binder,
    images: &ViewImages,
    resolutions: &[usize],
    runner: &mut dyn BlockRunner,
    with_early: bool,
) -> Result<EncoderNodes> {
    let geoms = spec.blocks();
    let d = &spec.dims;
    let mut pos = 0;
    let (mut features, mut gazes, mut keypoints, mut early) = (vec![], vec![], vec![], vec![]);
    for (v, &res) in spec.views.iter().zip(resolutions) {
        let view = v.view;
        let img = images
            .get(view)
            .ok_or_else(|| Error::MissingView(view.to_string()))?;
        if img.shape() != [1, d.image_size, d.image_size] {
            return Err(Error::InvalidArgument(format!(
                "{view} image has shape {:?}, expected [1, {s}, {s}]",
                img.shape(),
                s = d.image_size
            )));
        }
        let x = g.constant(img.clone());
        let x = if res == d.image_size {
            x
        } else {
            g.resize_bilinear(x, res, res)?
        };
        let stem = conv_unit(g, binder, &view_param(view, "stem"), x, 1, 3)?;
        let stem = g.silu(stem)?;
        if with_early {
            let e = conv_unit(g, binder, &view_param(view, "early"), stem, d.early_stride, 3)?;
            let e = g.silu(e)?;
            early.push(g.global_avg_pool(e)?);
        }
        let mut trunk = stem;
        for (branch, bs) in v.branches() {
            let mut h = if branch == Branch::Backbone { stem } else { trunk };
            for _ in bs {
                h = runner.run(g, binder, pos, &geoms[pos], h)?;
                pos += 1;
            }
            match branch {
                Branch::Backbone => trunk = h,
                Branch::Latent => {
                    let f = g.global_avg_pool(h)?;
                    let w = binder.get(g, &view_param(view, "latent_head.w"))?;
                    let b = binder.get(g, &view_param(view, "latent_head.b"))?;
                    features.push(g.affine(f, w, b)?);
                }
                Branch::Gaze => {
                    let f = g.global_avg_pool(h)?;
                    let w = binder.get(g, &view_param(view, "gaze_head.w"))?;
                    let b = binder.get(g, &view_param(view, "gaze_head.b"))?;
                    gazes.push(g.affine(f, w, b)?);
                }
                Branch::Keypoint => {
                    let k = conv_unit(g, binder, &view_param(view, "keypoint_head"), h, 1, 1)?;
                    keypoints.push(g.global_avg_pool(k)?);
                }
            }
        }
    }
    let joint = g.concat(&features, 0)?;
    let w = binder.get(g, "head.w")?;
    let b = binder.get(g, "head.b")?;
    let z = g.affine(joint, w, b)?;
    let cat = |g: &mut Graph, xs: &[NodeId]| -> Result<Option<NodeId>> {
        Ok(if xs.is_empty() {
            None
        } else {
            Some(g.concat(xs, 0)?)
        })
    };
    let gaze = cat(g, &gazes)?;
    let keypoints = cat(g, &keypoints)?;
    let early_z = match cat(g, &early)? {
        Some(e) => {
            let w = binder.get(g, "early_head.w")?;
            let b = binder.get(g, "early_head.b")?;
            Some(g.affine(e, w, b)?)
        }
        None => None,
    };
    Ok(EncoderNodes {
        z,
        gaze,
        keypoints,
        early_z,
        view_features: features,
    })
}

fn check_resolutions(spec: &SupernetSpec, resolutions: &[usize]) -> Result<()> {
    if resolutions.len() != spec.views.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} resolutions, got {}",
            spec.views.len(),
            resolutions.len()
        )));
    }
    if let Some(r) = resolutions
        .iter()
        .find(|&&r| spec.space.resolution_index(r).is_none())
    {
        return Err(Error::InvalidArgument(format!("resolution {r} is not a candidate")));
    }
    Ok(())
}

/// Supernet forward pass with per-block relaxed weights at the given per-view resolutions.
pub fn supernet_forward(
    g: &mut Graph,
    spec: &SupernetSpec,
    binder: &mut Binder,
    images: &ViewImages,
    weights: &[BlockWeights],
    resolutions: &[usize],
    with_early: bool,
) -> Result<EncoderNodes> {
    check_resolutions(spec, resolutions)?;
    let n = spec.blocks().len();
    if weights.len() != n {
        return Err(Error::InvalidArgument(format!(
            "expected weights for {n} blocks, got {}",
            weights.len()
        )));
    }
    let (n_ops, n_scales) = (spec.space.operators.len(), spec.space.channel_scales.len());
    for w in weights {
        if g.value(w.op).shape() != [n_ops] || g.value(w.channel).shape() != [n_scales] {
            return Err(Error::InvalidArgument(
                "block weights must be [operators] and [channel scales] vectors".into(),
            ));
        }
    }
    let mut runner = MixedRunner { spec, weights };
    encode(g, spec, binder, images, resolutions, &mut runner, with_early)
}

/// Forward pass of a discrete architecture whose weights are at concrete widths.
pub fn arch_forward(
    g: &mut Graph,
    spec: &SupernetSpec,
    arch: &SampledArch,
    binder: &mut Binder,
    images: &ViewImages,
    with_early: bool,
) -> Result<EncoderNodes> {
    let blocks = arch.plan(spec)?.into_iter().flat_map(|p| p.blocks).collect();
    let mut runner = DiscreteRunner { blocks };
    encode(g, spec, binder, images, &arch.resolutions(), &mut runner, with_early)
}

/// Constant one-hot weights selecting `arch` inside the supernet.
pub fn one_hot_weights(g: &mut Graph, spec: &SupernetSpec, arch: &SampledArch) -> Result<Vec<BlockWeights>> {
    arch.validate(spec)?;
    let space = &spec.space;
    Ok(arch
        .choices()
        .into_iter()
        .map(|(op, s)| {
            let o = super::gumbel::one_hot(space.operators.len(), space.op_index(op).unwrap());
            let c = super::gumbel::one_hot(
                space.channel_scales.len(),
                space.scale_index(s).unwrap(),
            );
            BlockWeights {
                op: g.constant(Tensor::vector(o)),
                channel: g.constant(Tensor::vector(c)),
            }
        })
        .collect())
}

/// Early-head latent estimate only: stems plus the early head.
pub fn early_forward(
    g: &mut Graph,
    spec: &SupernetSpec,
    binder: &mut Binder,
    images: &ViewImages,
    resolutions: &[usize],
) -> Result<NodeId> {
    check_resolutions(spec, resolutions)?;
    let d = &spec.dims;
    let mut early = Vec::with_capacity(spec.views.len());
    for (v, &res) in spec.views.iter().zip(resolutions) {
        let img = images
            .get(v.view)
            .ok_or_else(|| Error::MissingView(v.view.to_string()))?;
        let x = g.constant(img.clone());
        let x = if res == d.image_size {
            x
        } else {
            g.resize_bilinear(x, res, res)?
        };
        let s = conv_unit(g, binder, &view_param(v.view, "stem"), x, 1, 3)?;
        let s = g.silu(s)?;
        let e = conv_unit(g, binder, &view_param(v.view, "early"), s, d.early_stride, 3)?;
        let e = g.silu(e)?;
        early.push(g.global_avg_pool(e)?);
    }
    let e = g.concat(&early, 0)?;
    let w = binder.get(g, "early_head.w")?;
    let b = binder.get(g, "early_head.b")?;
    Ok(g.affine(e, w, b)?)
}
