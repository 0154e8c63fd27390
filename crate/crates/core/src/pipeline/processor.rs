use std::collections::VecDeque;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::canvas::{GlobalAccumulator, Interpolation, UpdateMode};
use super::rolling::RollingState;
use crate::{Image16, RawFrame, Result, SheetGeometry, ViewTransform};

/// Operator-controlled rendering parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewParams {
    pub shear_px: f64,
    pub out_pitch_um: f64,
    pub mode: UpdateMode,
    pub interp: Interpolation,
    /// Channels to emit; `None` emits all.
    pub channels: Option<Vec<u16>>,
}

impl ViewParams {
    /// Native deskew, global mode, linear interpolation.
    pub fn native(geom: &SheetGeometry) -> Self {
        Self {
            shear_px: geom.native_shear_px(),
            out_pitch_um: geom.pixel_pitch_um,
            mode: UpdateMode::Global,
            interp: Interpolation::Linear,
            channels: None,
        }
    }

    pub fn view(&self, geom: &SheetGeometry) -> Result<ViewTransform> {
        ViewTransform::from_shear(geom, self.shear_px, self.out_pitch_um)
    }

    pub fn emits_channel(&self, channel_id: u16) -> bool {
        self.channels.as_ref().is_none_or(|c| c.contains(&channel_id))
    }
}

/// Commands for the acquisition side rather than the renderer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SourceCommand {
    SetExposure { ms: f64 },
    MoveStage { dx_um: f64, dy_um: f64 },
}

struct MailboxInner {
    params: ViewParams,
    generation: u64,
    source_commands: VecDeque<SourceCommand>,
}

/// Single point through which every parameter change passes, giving one
/// total order of changes. Workers poll the generation counter.
pub struct ParamMailbox {
    inner: Mutex<MailboxInner>,
}

impl ParamMailbox {
    pub fn new(params: ViewParams) -> Self {
        Self {
            inner: Mutex::new(MailboxInner { params, generation: 0, source_commands: VecDeque::new() }),
        }
    }

    pub fn current(&self) -> (ViewParams, u64) {
        let g = self.inner.lock();
        (g.params.clone(), g.generation)
    }

    pub fn generation(&self) -> u64 {
        self.inner.lock().generation
    }

    /// Applies `f` under the lock and returns the new generation.
    pub fn update(&self, f: impl FnOnce(&mut ViewParams)) -> u64 {
        let mut g = self.inner.lock();
        f(&mut g.params);
        g.generation += 1;
        g.generation
    }

    pub fn push_source_command(&self, cmd: SourceCommand) -> u64 {
        let mut g = self.inner.lock();
        g.source_commands.push_back(cmd);
        g.generation += 1;
        g.generation
    }

    pub fn drain_source_commands(&self) -> Vec<SourceCommand> {
        self.inner.lock().source_commands.drain(..).collect()
    }
}

/// One channel's projection, before warping.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub image: Image16,
    pub channel_id: u16,
    pub sweep_index: u64,
    pub slice_index: usize,
    pub complete: bool,
    pub params: ViewParams,
}

#[derive(Debug, Clone)]
enum ModeState {
    Global(GlobalAccumulator),
    Rolling { state: RollingState, last_sweep: Option<u64> },
}

/// Deskew/accumulate state for one channel. Owned by exactly one worker.
#[derive(Debug, Clone)]
pub struct ChannelProcessor {
    channel_id: u16,
    geom: SheetGeometry,
    params: ViewParams,
    pending: Option<ViewParams>,
    state: ModeState,
    incomplete_stacks: u64,
}

impl ChannelProcessor {
    pub fn new(channel_id: u16, geom: SheetGeometry, params: ViewParams) -> Result<Self> {
        let state = Self::build_state(&geom, &params)?;
        Ok(Self { channel_id, geom, params, pending: None, state, incomplete_stacks: 0 })
    }

    fn build_state(geom: &SheetGeometry, params: &ViewParams) -> Result<ModeState> {
        Ok(match params.mode {
            UpdateMode::Global => ModeState::Global(GlobalAccumulator::new(*geom, params.shear_px, params.interp)?),
            UpdateMode::Rolling => ModeState::Rolling {
                state: RollingState::new(*geom, params.shear_px, params.interp)?,
                last_sweep: None,
            },
        })
    }

    pub fn channel_id(&self) -> u16 {
        self.channel_id
    }

    pub fn params(&self) -> &ViewParams {
        &self.params
    }

    pub fn geometry(&self) -> &SheetGeometry {
        &self.geom
    }

    pub fn incomplete_stacks(&self) -> u64 {
        self.incomplete_stacks
    }

    /// Schedules a parameter change.
    ///
    /// Global mode keeps the in-flight stack under the old parameters and
    /// switches at the next sweep, except that a switch to rolling mode is
    /// immediate. Rolling mode re-places the ring under a new shear at once;
    /// a switch back to global waits for the next sweep.
    pub fn set_params(&mut self, params: ViewParams) -> Result<()> {
        if params == self.params {
            self.pending = None;
            return Ok(());
        }
        // Validate before touching state.
        params.view(&self.geom)?;
        crate::geometry::output_extent(&self.geom, params.shear_px)?;
        match &mut self.state {
            ModeState::Global(_) => {
                if params.mode == UpdateMode::Rolling {
                    self.state = Self::build_state(&self.geom, &params)?;
                    self.params = params;
                    self.pending = None;
                } else {
                    self.pending = Some(params);
                }
            }
            ModeState::Rolling { state, .. } => {
                if params.mode == UpdateMode::Rolling {
                    if params.shear_px != self.params.shear_px || params.interp != self.params.interp {
                        state.reshear(params.shear_px, params.interp)?;
                    }
                    self.params = params;
                    self.pending = None;
                } else {
                    self.pending = Some(params);
                }
            }
        }
        Ok(())
    }

    fn apply_pending(&mut self) -> Result<()> {
        if let Some(next) = self.pending.take() {
            let rebuild = match &self.state {
                ModeState::Global(acc) => {
                    next.mode != UpdateMode::Global
                        || acc.shear_px() != next.shear_px
                        || next.interp != self.params.interp
                }
                ModeState::Rolling { .. } => true,
            };
            if rebuild {
                self.state = Self::build_state(&self.geom, &next)?;
            }
            self.params = next;
        }
        Ok(())
    }

    fn projection(&self, image: Image16, frame: &RawFrame, sweep_index: u64, complete: bool) -> Projection {
        Projection {
            image,
            channel_id: self.channel_id,
            sweep_index,
            slice_index: frame.slice_index,
            complete,
            params: self.params.clone(),
        }
    }

    /// Consumes one frame; returns zero, one or two projections.
    pub fn process(&mut self, frame: RawFrame) -> Result<Vec<Projection>> {
        let mut out = Vec::new();
        if let ModeState::Global(acc) = &mut self.state {
            match acc.sweep_index() {
                Some(s) if s != frame.sweep_index => {
                    // Interrupted stack: show what arrived, then move on.
                    let partial = acc.finalize_partial();
                    self.incomplete_stacks += 1;
                    out.push(self.projection(partial, &frame, s, false));
                    self.apply_pending()?;
                }
                None => self.apply_pending()?,
                _ => {}
            }
        } else if let ModeState::Rolling { last_sweep, .. } = &self.state {
            if *last_sweep != Some(frame.sweep_index) && self.pending.is_some() {
                self.apply_pending()?;
            }
        }

        match &mut self.state {
            ModeState::Global(acc) => {
                acc.place(&frame)?;
                if acc.is_complete() {
                    let sweep = frame.sweep_index;
                    let image = acc.finalize()?;
                    out.push(self.projection(image, &frame, sweep, true));
                }
            }
            ModeState::Rolling { state, last_sweep } => {
                let sweep = frame.sweep_index;
                *last_sweep = Some(sweep);
                let slice = frame.slice_index;
                state.replace(frame)?;
                let image = state.image().clone();
                let complete = state.is_full();
                out.push(Projection {
                    image,
                    channel_id: self.channel_id,
                    sweep_index: sweep,
                    slice_index: slice,
                    complete,
                    params: self.params.clone(),
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> SheetGeometry {
        SheetGeometry::new(45.0, 1.0, 1.0, 3, 2, 2).unwrap()
    }

    fn params(mode: UpdateMode, shear: f64) -> ViewParams {
        ViewParams { shear_px: shear, out_pitch_um: 1.0, mode, interp: Interpolation::Nearest, channels: None }
    }

    fn frame(slice: usize, sweep: u64, v: u16) -> RawFrame {
        RawFrame::new(2, 2, vec![v; 4]).with_indices(slice, sweep)
    }

    #[test]
    fn global_emits_once_per_stack() {
        let mut p = ChannelProcessor::new(0, geom(), params(UpdateMode::Global, 1.0)).unwrap();
        let mut emitted = 0;
        for sweep in 0..3 {
            for slice in 0..3 {
                let out = p.process(frame(slice, sweep, 5)).unwrap();
                emitted += out.len();
                assert!(out.iter().all(|o| o.complete && o.slice_index == 2));
            }
        }
        assert_eq!(emitted, 3);
    }

    #[test]
    fn rolling_emits_every_frame() {
        let mut p = ChannelProcessor::new(0, geom(), params(UpdateMode::Rolling, 1.0)).unwrap();
        let mut flags = Vec::new();
        for sweep in 0..2 {
            for slice in 0..3 {
                let out = p.process(frame(slice, sweep, 5)).unwrap();
                assert_eq!(out.len(), 1);
                flags.push(out[0].complete);
            }
        }
        assert_eq!(flags, vec![false, false, true, true, true, true]);
    }

    #[test]
    fn global_shear_change_waits_for_next_stack() {
        let mut p = ChannelProcessor::new(0, geom(), params(UpdateMode::Global, 1.0)).unwrap();
        p.process(frame(0, 0, 5)).unwrap();
        p.set_params(params(UpdateMode::Global, 0.0)).unwrap();
        p.process(frame(1, 0, 5)).unwrap();
        let out = p.process(frame(2, 0, 5)).unwrap();
        assert_eq!(out[0].params.shear_px, 1.0);
        assert_eq!(out[0].image.height, 4);
        for slice in 0..3 {
            let out = p.process(frame(slice, 1, 5)).unwrap();
            if slice == 2 {
                assert_eq!(out[0].params.shear_px, 0.0);
                assert_eq!(out[0].image.height, 2);
            }
        }
    }

    #[test]
    fn interrupted_stack_is_emitted_as_partial() {
        let mut p = ChannelProcessor::new(0, geom(), params(UpdateMode::Global, 1.0)).unwrap();
        p.process(frame(0, 0, 5)).unwrap();
        let out = p.process(frame(0, 1, 6)).unwrap();
        assert_eq!(out.len(), 1);
        assert!(!out[0].complete);
        assert_eq!(out[0].sweep_index, 0);
        assert_eq!(p.incomplete_stacks(), 1);
    }

    #[test]
    fn switch_to_rolling_is_immediate_and_reshear_applies() {
        let mut p = ChannelProcessor::new(0, geom(), params(UpdateMode::Global, 1.0)).unwrap();
        p.process(frame(0, 0, 5)).unwrap();
        p.set_params(params(UpdateMode::Rolling, 1.0)).unwrap();
        assert_eq!(p.process(frame(1, 0, 5)).unwrap().len(), 1);
        p.set_params(params(UpdateMode::Rolling, 0.0)).unwrap();
        let out = p.process(frame(2, 0, 5)).unwrap();
        assert_eq!(out[0].params.shear_px, 0.0);
        assert_eq!(out[0].image.height, 2);
    }

    #[test]
    fn mailbox_orders_updates() {
        let mb = ParamMailbox::new(ViewParams::native(&geom()));
        let g1 = mb.update(|p| p.shear_px = 0.5);
        let g2 = mb.push_source_command(SourceCommand::SetExposure { ms: 3.0 });
        assert!(g2 > g1);
        assert_eq!(mb.current().0.shear_px, 0.5);
        assert_eq!(mb.drain_source_commands(), vec![SourceCommand::SetExposure { ms: 3.0 }]);
        assert!(mb.drain_source_commands().is_empty());
    }
}
