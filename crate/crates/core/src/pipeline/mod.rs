//! Split → deskew/accumulate → warp → emit, plus telemetry and the runtimes
//! that drive it.

mod canvas;
mod layout;
mod processor;
mod queue;
mod rolling;
pub mod runtime;
pub mod telemetry;
mod warp;

pub use canvas::{
    deskew_place, GlobalAccumulator, Interpolation, Placement, ProjectionCanvas, RowSpan, UpdateMode,
};
pub use layout::{split_channels, ChannelLayout, ChannelRegion};
pub use processor::{ChannelProcessor, ParamMailbox, Projection, SourceCommand, ViewParams};
pub use queue::DropOldestQueue;
pub use rolling::{RollingState, NO_CONTRIBUTOR};
pub use runtime::{run_deterministic, DeterministicRunner, FrameSink, LiveConfig, LivePipeline, RunSummary};
pub use telemetry::{
    classify_bottleneck, least_squares_slope, simulate_timeline, timings_from_costs, Bottleneck,
    BottleneckReport, StageCost, StageTimings, StackEvents, TelemetryHub, TelemetrySnapshot, Timeline,
};
pub use warp::{warp_and_emit, warp_rows, DisplayImage, EmitTags};
