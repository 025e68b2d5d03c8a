//! The view-decoupled searchable encoder: search space, weights and forward passes.

mod arch;
mod forward;
mod gumbel;
mod params;
mod space;

pub use arch::{
    derive_arch, ArchDocument, BranchArch, BranchDocument, BranchOutput, MixedBlockParams,
    PlannedBlock, Reference, SampledArch, ViewArch, ViewDocument, ViewPlan,
};
pub use forward::{
    arch_forward, channel_masks, early_forward, one_hot_weights, supernet_forward, Binder,
    BlockWeights, EncoderNodes, ViewImages,
};
pub use gumbel::{gumbel_softmax, gumbel_softmax_node, hard_sample, one_hot, sample_gumbel, softmax};
pub use params::{
    arch_layout, block_prefix, check_layout, init_params, op_params, slice_for_arch,
    supernet_layout, view_param, ParamSpec, Params,
};
pub use space::{
    scaled_channels, strided_size, BlockGeom, BlockRef, BlockSpec, Branch, Dims, Operator,
    Profile, ResolvedOp, SearchSpace, SupernetSpec, View, ViewSpec, CHANNEL_SCALES,
    FUSED_MB_EXPANSION, RESOLUTIONS,
};
