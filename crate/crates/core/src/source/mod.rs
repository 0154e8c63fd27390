//! Frame sources: a simulated camera imaging phantoms and recorded stacks.

mod camera;
mod file;
pub mod timing;

pub use camera::SimulatedCamera;
pub use file::{open_stack, sidecar_path, write_raw_stack, write_tiff_stack, FileSource, StackMetadata};
pub use timing::{
    galvo_staircase, schedule, validate_settle, CameraTiming, GalvoWaveform, SettleReport, SettleViolation,
    SliceEvents, TriggerMode, TriggerSchedule, CALIBRATED_READOUT_MS, DEFAULT_SETTLE_MS,
};

use crate::{Error, RawFrame, Result, SheetGeometry};

/// What a source can be asked to change while running.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SourceCapabilities {
    pub stage: bool,
    pub exposure: bool,
}

/// Producer of raw frames in acquisition order.
///
/// `next_frame` returns [`Error::EndOfStream`] when a finite source runs out
/// and [`Error::Closed`] after [`FrameSource::close`].
pub trait FrameSource: Send {
    fn next_frame(&mut self) -> Result<RawFrame>;

    fn geometry(&self) -> &SheetGeometry;

    fn timing(&self) -> &CameraTiming;

    fn capabilities(&self) -> SourceCapabilities;

    fn set_exposure_ms(&mut self, _ms: f64) -> Result<()> {
        Err(Error::Unsupported("exposure control".into()))
    }

    fn move_stage(&mut self, _dx_um: f64, _dy_um: f64) -> Result<()> {
        Err(Error::Unsupported("stage control".into()))
    }

    fn close(&mut self);
}
