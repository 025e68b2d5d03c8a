//! FLOPs counting and device latency lookup tables.

mod flops;
mod latency;

pub use flops::{block_macs, count_flops, FlopsEntry, FlopsReport, Part};
pub use latency::{
    expected_latency, input_sizes, DeviceModel, LatencyKey, LatencyLut, LutError, LUT_COLUMNS,
};
