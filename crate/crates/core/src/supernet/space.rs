use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output channel scales searched on top of each block's maximal width.
pub const CHANNEL_SCALES: [f64; 11] = [
    0.5, 0.53125, 0.5625, 0.59375, 0.625, 0.6875, 0.75, 0.8125, 0.875, 0.9375, 1.0,
];

/// Input resolution candidates; the largest is the reference encoder's.
pub const RESOLUTIONS: [usize; 7] = [32, 48, 64, 80, 96, 128, 192];

/// Hidden width of a Fused-MBConv block as a multiple of its output width.
pub const FUSED_MB_EXPANSION: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum View {
    LeftEye,
    RightEye,
    Mouth,
}

impl View {
    pub fn is_eye(self) -> bool {
        matches!(self, View::LeftEye | View::RightEye)
    }

    pub fn name(self) -> &'static str {
        match self {
            View::LeftEye => "left-eye",
            View::RightEye => "right-eye",
            View::Mouth => "mouth",
        }
    }

    pub fn parse(s: &str) -> Option<View> {
        [View::LeftEye, View::RightEye, View::Mouth]
            .into_iter()
            .find(|v| v.name() == s)
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Backbone,
    Latent,
    Gaze,
    Keypoint,
}

impl Branch {
    pub const ALL: [Branch; 4] = [Branch::Backbone, Branch::Latent, Branch::Gaze, Branch::Keypoint];

    pub fn name(self) -> &'static str {
        match self {
            Branch::Backbone => "backbone",
            Branch::Latent => "latent",
            Branch::Gaze => "gaze",
            Branch::Keypoint => "keypoint",
        }
    }

    pub fn parse(s: &str) -> Option<Branch> {
        Branch::ALL.into_iter().find(|b| b.name() == s)
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Candidate operator of a searchable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "fuse-mb")]
    FusedMb,
    #[serde(rename = "conv")]
    Conv3x3,
    #[serde(rename = "skip")]
    Skip,
}

impl Operator {
    pub const ALL: [Operator; 3] = [Operator::FusedMb, Operator::Conv3x3, Operator::Skip];

    pub fn name(self) -> &'static str {
        match self {
            Operator::FusedMb => "fuse-mb",
            Operator::Conv3x3 => "conv",
            Operator::Skip => "skip",
        }
    }

    pub fn parse(s: &str) -> Option<Operator> {
        Operator::ALL.into_iter().find(|o| o.name() == s)
    }

    /// Cost rank used to break ties: lower is cheaper at equal width.
    pub fn cost_rank(self) -> u8 {
        match self {
            Operator::Skip => 0,
            Operator::Conv3x3 => 1,
            Operator::FusedMb => 2,
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a chosen operator executes as once block dimensions are known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResolvedOp {
    #[serde(rename = "fuse-mb")]
    FusedMb,
    #[serde(rename = "conv")]
    Conv3x3,
    #[serde(rename = "identity")]
    Identity,
    #[serde(rename = "conv1x1")]
    Conv1x1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub operators: Vec<Operator>,
    pub channel_scales: Vec<f64>,
    pub resolutions: Vec<usize>,
}

impl SearchSpace {
    pub fn full() -> Self {
        Self {
            operators: Operator::ALL.to_vec(),
            channel_scales: CHANNEL_SCALES.to_vec(),
            resolutions: RESOLUTIONS.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidSpace(m.to_string()));
        if self.operators.is_empty() || self.channel_scales.is_empty() || self.resolutions.is_empty()
        {
            return fail("every candidate list must be non-empty");
        }
        for (i, a) in self.operators.iter().enumerate() {
            if self.operators[i + 1..].contains(a) {
                return fail("duplicate operator");
            }
        }
        if self.channel_scales.windows(2).any(|w| w[0] >= w[1]) {
            return fail("channel scales must be strictly increasing");
        }
        if self
            .channel_scales
            .iter()
            .any(|&s| !(s > 0.0 && s <= 1.0))
        {
            return fail("channel scales must lie in (0, 1]");
        }
        if self.resolutions.windows(2).any(|w| w[0] >= w[1]) || self.resolutions[0] == 0 {
            return fail("resolutions must be positive and strictly increasing");
        }
        Ok(())
    }

    pub fn op_index(&self, op: Operator) -> Option<usize> {
        self.operators.iter().position(|&o| o == op)
    }

    pub fn scale_index(&self, scale: f64) -> Option<usize> {
        self.channel_scales.iter().position(|&s| s == scale)
    }

    pub fn resolution_index(&self, res: usize) -> Option<usize> {
        self.resolutions.iter().position(|&r| r == res)
    }
}

/// Number of leading channels kept at `scale` of `max` channels.
pub fn scaled_channels(scale: f64, max: usize) -> usize {
    ((scale * max as f64 - 1e-9).ceil() as usize).clamp(1, max)
}

/// Spatial size after a padded 3x3 or unpadded 1x1 convolution with `stride`.
pub fn strided_size(n: usize, stride: usize) -> usize {
    (n - 1) / stride + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub max_channels: usize,
    pub stride: usize,
}

fn blocks(max: &[usize], strides: &[usize]) -> Vec<BlockSpec> {
    max.iter()
        .zip(strides)
        .map(|(&max_channels, &stride)| BlockSpec {
            max_channels,
            stride,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSpec {
    pub view: View,
    pub backbone: Vec<BlockSpec>,
    pub latent: Vec<BlockSpec>,
    #[serde(default)]
    pub gaze: Option<Vec<BlockSpec>>,
    #[serde(default)]
    pub keypoint: Option<Vec<BlockSpec>>,
}

impl ViewSpec {
    /// Present branches in canonical order.
    pub fn branches(&self) -> Vec<(Branch, &[BlockSpec])> {
        let mut out = vec![
            (Branch::Backbone, self.backbone.as_slice()),
            (Branch::Latent, self.latent.as_slice()),
        ];
        if let Some(g) = &self.gaze {
            out.push((Branch::Gaze, g.as_slice()));
        }
        if let Some(k) = &self.keypoint {
            out.push((Branch::Keypoint, k.as_slice()));
        }
        out
    }

    pub fn branch(&self, b: Branch) -> Option<&[BlockSpec]> {
        self.branches()
            .into_iter()
            .find(|(x, _)| *x == b)
            .map(|(_, s)| s)
    }
}

/// Fixed (non-searchable) widths of the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    /// Side length of captured view images; every resolution resamples from it.
    pub image_size: usize,
    pub stem_channels: usize,
    /// Width of each view's latent feature before the joint head.
    pub feature_dim: usize,
    pub latent_dim: usize,
    pub gaze_per_eye: usize,
    pub keypoints_per_eye: usize,
    pub early_channels: usize,
    pub early_stride: usize,
}

impl Dims {
    /// Keypoints are 2-D, so each eye regresses twice as many values.
    pub fn keypoint_values_per_eye(&self) -> usize {
        2 * self.keypoints_per_eye
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    FullDims,
    ToyDims,
    /// Mouth-only two-block space with 32 architectures.
    Micro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockRef {
    pub view: View,
    pub branch: Branch,
    pub index: usize,
}

impl fmt::Display for BlockRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.view, self.branch, self.index)
    }
}

/// Structural dimensions of one searchable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGeom {
    pub block: BlockRef,
    pub view_index: usize,
    pub max_in: usize,
    pub max_out: usize,
    pub stride: usize,
}

impl BlockGeom {
    /// A skip here is a plain identity; otherwise it becomes a 1x1 convolution.
    pub fn identity_skip(&self) -> bool {
        self.max_in == self.max_out && self.stride == 1
    }

    pub fn resolve(&self, op: Operator) -> ResolvedOp {
        match op {
            Operator::FusedMb => ResolvedOp::FusedMb,
            Operator::Conv3x3 => ResolvedOp::Conv3x3,
            Operator::Skip if self.identity_skip() => ResolvedOp::Identity,
            Operator::Skip => ResolvedOp::Conv1x1,
        }
    }
}

/// The view-decoupled searchable encoder topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupernetSpec {
    pub views: Vec<ViewSpec>,
    pub dims: Dims,
    pub space: SearchSpace,
}

impl SupernetSpec {
    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::FullDims => Self::full(),
            Profile::ToyDims => Self::toy(),
            Profile::Micro => Self::micro(),
        }
    }

    /// Full-width layout: 2/6/6/2 blocks per backbone/latent/gaze/keypoint branch.
    pub fn full() -> Self {
        let eye = |view| ViewSpec {
            view,
            backbone: blocks(&[64, 64], &[2, 2]),
            latent: blocks(&[64, 64, 256, 256, 512, 512], &[1, 2, 2, 2, 1, 1]),
            gaze: Some(blocks(&[256, 256, 128, 128, 32, 32], &[1, 2, 2, 2, 1, 1])),
            keypoint: Some(blocks(&[128, 64], &[1, 1])),
        };
        Self {
            views: vec![
                eye(View::LeftEye),
                eye(View::RightEye),
                ViewSpec {
                    view: View::Mouth,
                    backbone: blocks(&[64, 64], &[2, 2]),
                    latent: blocks(&[64, 64, 256, 256, 512, 512], &[1, 2, 2, 2, 1, 1]),
                    gaze: None,
                    keypoint: None,
                },
            ],
            dims: Dims {
                image_size: 192,
                stem_channels: 8,
                feature_dim: 128,
                latent_dim: 256,
                gaze_per_eye: 3,
                keypoints_per_eye: 19,
                early_channels: 8,
                early_stride: 4,
            },
            space: SearchSpace::full(),
        }
    }

    /// Same topology with widths divided by 16 and resolutions by 8.
    pub fn toy() -> Self {
        let eye = |view| ViewSpec {
            view,
            backbone: blocks(&[4, 4], &[2, 2]),
            latent: blocks(&[4, 4, 16, 16, 32, 32], &[1, 2, 2, 2, 1, 1]),
            gaze: Some(blocks(&[16, 16, 8, 8, 2, 2], &[1, 2, 2, 2, 1, 1])),
            keypoint: Some(blocks(&[8, 4], &[1, 1])),
        };
        Self {
            views: vec![
                eye(View::LeftEye),
                eye(View::RightEye),
                ViewSpec {
                    view: View::Mouth,
                    backbone: blocks(&[4, 4], &[2, 2]),
                    latent: blocks(&[4, 4, 16, 16, 32, 32], &[1, 2, 2, 2, 1, 1]),
                    gaze: None,
                    keypoint: None,
                },
            ],
            dims: Dims {
                image_size: 24,
                stem_channels: 4,
                feature_dim: 8,
                latent_dim: 8,
                gaze_per_eye: 3,
                keypoints_per_eye: 4,
                early_channels: 4,
                early_stride: 4,
            },
            space: SearchSpace {
                operators: Operator::ALL.to_vec(),
                channel_scales: CHANNEL_SCALES.to_vec(),
                resolutions: RESOLUTIONS.iter().map(|r| r / 8).collect(),
            },
        }
    }

    /// Exhaustively enumerable space: one mouth view, one backbone and one latent block,
    /// operators {conv, skip}, scales {0.5, 1.0}, resolutions {8, 16}.
    ///
    /// Both blocks are strided so a skip is a 1x1 convolution whose width matters.
    pub fn micro() -> Self {
        Self {
            views: vec![ViewSpec {
                view: View::Mouth,
                backbone: blocks(&[8], &[2]),
                latent: blocks(&[16], &[2]),
                gaze: None,
                keypoint: None,
            }],
            dims: Dims {
                image_size: 16,
                stem_channels: 4,
                feature_dim: 8,
                latent_dim: 4,
                gaze_per_eye: 3,
                keypoints_per_eye: 4,
                early_channels: 4,
                early_stride: 4,
            },
            space: SearchSpace {
                operators: vec![Operator::Conv3x3, Operator::Skip],
                channel_scales: vec![0.5, 1.0],
                resolutions: vec![8, 16],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        let fail = |m: String| Err(Error::InvalidSpace(m));
        if self.views.is_empty() {
            return fail("at least one view is required".into());
        }
        for (i, v) in self.views.iter().enumerate() {
            if self.views[..i].iter().any(|w| w.view == v.view) {
                return fail(format!("duplicate view {}", v.view));
            }
            let three = v.gaze.is_some() && v.keypoint.is_some();
            let one = v.gaze.is_none() && v.keypoint.is_none();
            if v.view.is_eye() && !three {
                return fail(format!("{} must own latent, gaze and keypoint branches", v.view));
            }
            if !v.view.is_eye() && !one {
                return fail(format!("{} owns only a latent branch", v.view));
            }
            for (_, bs) in v.branches() {
                if bs.iter().any(|b| b.max_channels == 0 || b.stride == 0) {
                    return fail("block widths and strides must be positive".into());
                }
            }
        }
        let d = &self.dims;
        let widths = [d.stem_channels, d.feature_dim, d.latent_dim, d.early_channels];
        if widths.contains(&0) || d.early_stride == 0 || d.image_size == 0 {
            return fail("fixed widths must be positive".into());
        }
        if *self.space.resolutions.last().unwrap() > d.image_size {
            return fail("resolutions cannot exceed the captured image size".into());
        }
        Ok(())
    }

    pub fn eye_views(&self) -> usize {
        self.views.iter().filter(|v| v.view.is_eye()).count()
    }

    pub fn gaze_dim(&self) -> usize {
        self.eye_views() * self.dims.gaze_per_eye
    }

    pub fn keypoint_dim(&self) -> usize {
        self.eye_views() * self.dims.keypoint_values_per_eye()
    }

    pub fn view_index(&self, view: View) -> Option<usize> {
        self.views.iter().position(|v| v.view == view)
    }

    /// Every searchable block in canonical order (view, branch, index).
    pub fn blocks(&self) -> Vec<BlockGeom> {
        let mut out = Vec::new();
        for (vi, v) in self.views.iter().enumerate() {
            let mut width = self.dims.stem_channels;
            for (branch, bs) in v.branches() {
                let mut max_in = if branch == Branch::Backbone {
                    self.dims.stem_channels
                } else {
                    width
                };
                for (index, b) in bs.iter().enumerate() {
                    out.push(BlockGeom {
                        block: BlockRef {
                            view: v.view,
                            branch,
                            index,
                        },
                        view_index: vi,
                        max_in,
                        max_out: b.max_channels,
                        stride: b.stride,
                    });
                    max_in = b.max_channels;
                }
                if branch == Branch::Backbone {
                    width = max_in;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_space_constants() {
        let s = SearchSpace::full();
        s.validate().unwrap();
        assert_eq!(s.channel_scales.len(), 11);
        assert_eq!(s.channel_scales[0], 0.5);
        assert_eq!(*s.channel_scales.last().unwrap(), 1.0);
        assert_eq!(*s.resolutions.last().unwrap(), 192);
    }

    #[test]
    fn profiles_validate() {
        SupernetSpec::full().validate().unwrap();
        SupernetSpec::toy().validate().unwrap();
    }

    #[test]
    fn full_topology() {
        let spec = SupernetSpec::full();
        assert_eq!(spec.blocks().len(), 3 * 2 + 2 * (6 + 6 + 2) + 6);
        let v = &spec.views[0];
        assert_eq!(v.branches().len(), 4);
        assert_eq!(spec.views[2].branches().len(), 2);
        assert_eq!(spec.gaze_dim(), 6);
        assert_eq!(spec.dims.feature_dim, 128);
        let stride = |bs: &[BlockSpec]| bs.iter().map(|b| b.stride).product::<usize>();
        assert_eq!(stride(&v.backbone), 4);
        assert_eq!(stride(&v.latent), 8);
        assert_eq!(stride(v.gaze.as_ref().unwrap()), 8);
    }

    #[test]
    fn branch_inputs_start_from_backbone() {
        let blocks = SupernetSpec::full().blocks();
        let first_latent = blocks
            .iter()
            .find(|b| b.block.branch == Branch::Latent)
            .unwrap();
        assert_eq!(first_latent.max_in, 64);
        assert!(first_latent.identity_skip());
        let first_kp = blocks
            .iter()
            .find(|b| b.block.branch == Branch::Keypoint)
            .unwrap();
        assert_eq!(first_kp.resolve(Operator::Skip), ResolvedOp::Conv1x1);
        assert_eq!(blocks[0].max_in, 8);
    }

    #[test]
    fn eye_without_gaze_is_rejected() {
        let mut spec = SupernetSpec::toy();
        spec.views[0].gaze = None;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn mask_widths() {
        assert_eq!(scaled_channels(0.5, 64), 32);
        assert_eq!(scaled_channels(0.53125, 64), 34);
        assert_eq!(scaled_channels(1.0, 64), 64);
        assert_eq!(scaled_channels(0.5, 2), 1);
        assert_eq!(scaled_channels(0.5625, 4), 3);
    }
}
