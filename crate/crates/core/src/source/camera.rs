use std::sync::Arc;

use super::timing::CameraTiming;
use super::{FrameSource, SourceCapabilities};
use crate::clock::{ms_to_ns, Clock};
use crate::phantom::{render_skewed_slice_at, PhantomScene};
use crate::pipeline::ChannelLayout;
use crate::{Error, RawFrame, Result, SheetGeometry};

/// Camera that images phantom scenes on a tilted sheet with a realistic
/// exposure/readout cadence.
///
/// Frame `k` is slice `k mod N` of sweep `k div N`. Its exposure starts at
/// `k·(e + r)` after the camera opens; it is timestamped and delivered at
/// the end of its readout. Moving the stage restarts the sweep at slice 0.
pub struct SimulatedCamera {
    scenes: Vec<PhantomScene>,
    layout: ChannelLayout,
    geom: SheetGeometry,
    timing: CameraTiming,
    clock: Arc<dyn Clock>,
    paced: bool,
    noise_seed: Option<u64>,
    stage_um: [f64; 2],
    frame_counter: u64,
    next_deadline_ns: u64,
    start_ns: u64,
    jitter_ns: Vec<i64>,
    cache: Vec<Option<Vec<u16>>>,
    closed: bool,
}

impl SimulatedCamera {
    pub fn new(scene: PhantomScene, geom: SheetGeometry, timing: CameraTiming, clock: Arc<dyn Clock>) -> Result<Self> {
        let layout = ChannelLayout::single(geom.frame_width_px, geom.frame_height_px);
        Self::multi_channel(vec![scene], layout, geom, timing, clock)
    }

    /// One scene per layout region; each region must be `W × H` of `geom`.
    pub fn multi_channel(
        scenes: Vec<PhantomScene>,
        layout: ChannelLayout,
        geom: SheetGeometry,
        timing: CameraTiming,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        geom.validate()?;
        timing.validate()?;
        let (fw, fh) = layout.frame_size();
        layout.validate(fw, fh)?;
        if scenes.len() != layout.regions.len() {
            return Err(Error::param(format!(
                "{} scenes for {} channel regions",
                scenes.len(),
                layout.regions.len()
            )));
        }
        if layout
            .regions
            .iter()
            .any(|r| r.w != geom.frame_width_px || r.h != geom.frame_height_px)
        {
            return Err(Error::param("every channel region must match the slice geometry"));
        }
        let start_ns = clock.now_ns();
        Ok(Self {
            cache: vec![None; geom.slice_count],
            scenes,
            layout,
            geom,
            timing,
            paced: true,
            noise_seed: None,
            stage_um: [0.0, 0.0],
            frame_counter: 0,
            next_deadline_ns: start_ns,
            start_ns,
            jitter_ns: Vec::new(),
            closed: false,
            clock,
        })
    }

    pub fn with_noise(mut self, seed: u64) -> Self {
        self.noise_seed = Some(seed);
        self.cache.fill(None);
        self
    }

    /// Returns frames immediately instead of at their scheduled time.
    pub fn unpaced(mut self) -> Self {
        self.paced = false;
        self
    }

    pub fn layout(&self) -> &ChannelLayout {
        &self.layout
    }

    pub fn stage_position_um(&self) -> [f64; 2] {
        self.stage_um
    }

    /// Delivery time minus scheduled time for every frame so far, ns.
    pub fn jitter_ns(&self) -> &[i64] {
        &self.jitter_ns
    }

    pub fn start_ns(&self) -> u64 {
        self.start_ns
    }

    fn render(&mut self, slice: usize) -> Result<Vec<u16>> {
        if self.noise_seed.is_none() {
            if let Some(px) = &self.cache[slice] {
                return Ok(px.clone());
            }
        }
        let (fw, fh) = self.layout.frame_size();
        let mut pixels = vec![0u16; fw * fh];
        // Noise differs per frame, not just per slice.
        let seed = self.noise_seed.map(|s| s ^ self.frame_counter.wrapping_mul(0xA24B_AED4_963E_E407));
        for (region, scene) in self.layout.regions.iter().zip(&self.scenes) {
            let sub = render_skewed_slice_at(scene, &self.geom, slice, self.stage_um, seed)?;
            for row in 0..region.h {
                let dst = (region.y0 + row) * fw + region.x0;
                pixels[dst..dst + region.w].copy_from_slice(sub.row(row));
            }
        }
        if self.noise_seed.is_none() {
            self.cache[slice] = Some(pixels.clone());
        }
        Ok(pixels)
    }
}

impl FrameSource for SimulatedCamera {
    fn next_frame(&mut self) -> Result<RawFrame> {
        if self.closed {
            return Err(Error::Closed);
        }
        let n = self.geom.slice_count as u64;
        let slice = (self.frame_counter % n) as usize;
        let sweep = self.frame_counter / n;
        let pixels = self.render(slice)?;

        let period = ms_to_ns(self.timing.frame_period_ms());
        let scheduled = self.next_deadline_ns + period;
        self.next_deadline_ns = scheduled;
        // Hardware timestamp; delivery lateness is tracked separately.
        let timestamp_ns = scheduled;
        if self.paced {
            self.clock.sleep_until(scheduled);
            self.jitter_ns.push(self.clock.now_ns() as i64 - scheduled as i64);
        }

        self.frame_counter += 1;
        let (fw, fh) = self.layout.frame_size();
        let mut frame = RawFrame::new(fw, fh, pixels).with_indices(slice, sweep);
        frame.timestamp_ns = timestamp_ns;
        Ok(frame)
    }

    fn geometry(&self) -> &SheetGeometry {
        &self.geom
    }

    fn timing(&self) -> &CameraTiming {
        &self.timing
    }

    fn capabilities(&self) -> SourceCapabilities {
        SourceCapabilities { stage: true, exposure: true }
    }

    fn set_exposure_ms(&mut self, ms: f64) -> Result<()> {
        let next = CameraTiming { exposure_ms: ms, ..self.timing };
        next.validate()?;
        self.timing = next;
        Ok(())
    }

    fn move_stage(&mut self, dx_um: f64, dy_um: f64) -> Result<()> {
        if !(dx_um.is_finite() && dy_um.is_finite()) {
            return Err(Error::param("stage move must be finite"));
        }
        self.stage_um[0] += dx_um;
        self.stage_um[1] += dy_um;
        self.cache.fill(None);
        let n = self.geom.slice_count as u64;
        if !self.frame_counter.is_multiple_of(n) {
            self.frame_counter += n - self.frame_counter % n;
        }
        Ok(())
    }

    fn close(&mut self) {
        self.closed = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{MonotonicClock, VirtualClock};
    use crate::phantom::{Extent, Primitive};

    fn scene() -> PhantomScene {
        PhantomScene::new(
            Extent { min_um: [0.0; 3], max_um: [32.0, 64.0, 32.0] },
            vec![Primitive::Sphere { center_um: [8.0, 12.0, 4.0], radius_um: 3.0, intensity: 1000 }],
        )
        .unwrap()
    }

    fn geom() -> SheetGeometry {
        SheetGeometry::new(30.0, 1.0, 1.0, 5, 16, 12).unwrap()
    }

    #[test]
    fn frames_follow_the_schedule_on_a_virtual_clock() {
        let clock = Arc::new(VirtualClock::new());
        let mut cam = SimulatedCamera::new(scene(), geom(), CameraTiming::new(0.1, 1.5).unwrap(), clock).unwrap();
        let frames: Vec<RawFrame> = (0..12).map(|_| cam.next_frame().unwrap()).collect();
        for (k, f) in frames.iter().enumerate() {
            assert_eq!(f.slice_index, k % 5);
            assert_eq!(f.sweep_index, (k / 5) as u64);
            assert_eq!(f.timestamp_ns, (k as u64 + 1) * 1_600_000);
        }
        assert!(cam.jitter_ns().iter().all(|&j| j == 0));
        assert_eq!(frames[0].pixels, frames[5].pixels);
    }

    #[test]
    fn wall_clock_pacing_is_never_early() {
        let clock = Arc::new(MonotonicClock::new());
        let mut cam = SimulatedCamera::new(scene(), geom(), CameraTiming::new(0.5, 1.5).unwrap(), clock.clone()).unwrap();
        let first = cam.next_frame().unwrap();
        assert!(first.timestamp_ns >= cam.start_ns() + 2_000_000);
        assert!(cam.jitter_ns()[0] >= 0);
    }

    #[test]
    fn stage_move_restarts_the_sweep_and_shifts_the_image() {
        let clock = Arc::new(VirtualClock::new());
        let mut cam = SimulatedCamera::new(scene(), geom(), CameraTiming::new(0.1, 1.5).unwrap(), clock).unwrap();
        let before: Vec<RawFrame> = (0..2).map(|_| cam.next_frame().unwrap()).collect();
        cam.move_stage(3.0, 0.0).unwrap();
        let after = cam.next_frame().unwrap();
        assert_eq!((after.slice_index, after.sweep_index), (0, 1));
        assert_ne!(after.pixels, before[0].pixels);
        // Lateral move of 3 µm = 3 columns at 1 µm pitch.
        for row in 0..after.height {
            assert_eq!(&after.row(row)[3..], &before[0].row(row)[..13]);
        }
    }

    #[test]
    fn exposure_change_updates_period() {
        let clock = Arc::new(VirtualClock::new());
        let mut cam = SimulatedCamera::new(scene(), geom(), CameraTiming::new(0.1, 1.5).unwrap(), clock).unwrap();
        cam.next_frame().unwrap();
        cam.set_exposure_ms(2.5).unwrap();
        let f = cam.next_frame().unwrap();
        assert_eq!(f.timestamp_ns, 1_600_000 + 4_000_000);
        assert!(cam.set_exposure_ms(-1.0).is_err());
        cam.close();
        assert!(matches!(cam.next_frame(), Err(Error::Closed)));
    }
}
