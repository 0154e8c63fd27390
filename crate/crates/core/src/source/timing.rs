use serde::{Deserialize, Serialize};

use crate::{Error, Result, SheetGeometry};

/// Readout time that makes a 0.1 ms exposure, 50-slice stack run at 12.5
/// volumes per second: `1 / (12.5 · 50) − 0.1 ms`.
pub const CALIBRATED_READOUT_MS: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TriggerMode {
    Internal,
    /// Galvo levels are preloaded and stepped by the camera's exposure line.
    #[default]
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraTiming {
    pub exposure_ms: f64,
    pub readout_ms: f64,
    #[serde(default)]
    pub trigger_mode: TriggerMode,
}

impl CameraTiming {
    pub fn new(exposure_ms: f64, readout_ms: f64) -> Result<Self> {
        let t = Self { exposure_ms, readout_ms, trigger_mode: TriggerMode::External };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exposure_ms >= 0.0 && self.exposure_ms.is_finite()) {
            return Err(Error::param(format!("exposure must be >= 0 ms, got {}", self.exposure_ms)));
        }
        if !(self.readout_ms > 0.0 && self.readout_ms.is_finite()) {
            return Err(Error::param(format!("readout must be > 0 ms, got {}", self.readout_ms)));
        }
        Ok(())
    }

    pub fn frame_period_ms(&self) -> f64 {
        self.exposure_ms + self.readout_ms
    }
}

impl Default for CameraTiming {
    fn default() -> Self {
        Self { exposure_ms: 0.1, readout_ms: CALIBRATED_READOUT_MS, trigger_mode: TriggerMode::External }
    }
}

/// Event times for one slice, ms from the start of the stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceEvents {
    pub exposure_start: f64,
    pub exposure_end: f64,
    pub galvo_step_issue: f64,
    pub galvo_settled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerSchedule {
    pub slices: Vec<SliceEvents>,
    pub exposure_ms: f64,
    pub readout_ms: f64,
    pub stack_period_ms: f64,
    /// Laser and filter-wheel lines are annotations only; their timing is
    /// not modelled beyond "on during exposure".
    pub annotations: Vec<String>,
}

impl TriggerSchedule {
    pub fn volumes_per_second(&self) -> f64 {
        1000.0 / self.stack_period_ms
    }

    /// Checks per-slice ordering and that every settle completes before the
    /// next exposure starts.
    pub fn is_ordered(&self) -> bool {
        let per_slice = self.slices.iter().all(|s| {
            s.exposure_start < s.exposure_end || (s.exposure_start == s.exposure_end && self.exposure_ms == 0.0)
        }) && self
            .slices
            .iter()
            .all(|s| s.exposure_end <= s.galvo_step_issue && s.galvo_step_issue <= s.galvo_settled);
        let across = self
            .slices
            .windows(2)
            .all(|w| w[0].galvo_settled <= w[1].exposure_start && w[0].exposure_start < w[1].exposure_start);
        per_slice && across
    }
}

/// Externally triggered stack: slice `k` exposes at `k·(e + r)`, the galvo
/// steps at exposure end and has the whole readout window to settle.
pub fn schedule(timing: &CameraTiming, geom: &SheetGeometry) -> TriggerSchedule {
    let period = timing.frame_period_ms();
    let slices = (0..geom.slice_count)
        .map(|k| {
            let start = k as f64 * period;
            let end = start + timing.exposure_ms;
            SliceEvents {
                exposure_start: start,
                exposure_end: end,
                galvo_step_issue: end,
                // End of the readout window; equals the next exposure start.
                galvo_settled: (k + 1) as f64 * period,
            }
        })
        .collect();
    TriggerSchedule {
        slices,
        exposure_ms: timing.exposure_ms,
        readout_ms: timing.readout_ms,
        stack_period_ms: geom.slice_count as f64 * period,
        annotations: vec![
            "laser: on during each exposure".into(),
            "filter wheel: fixed for the sweep".into(),
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettleViolation {
    /// Gap between slice `after_slice` and `after_slice + 1`.
    pub after_slice: usize,
    pub settle_ms: f64,
    pub window_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettleReport {
    pub passed: bool,
    pub gaps_checked: usize,
    pub violations: Vec<SettleViolation>,
}

/// The galvo must move and settle inside the readout window of every
/// inter-slice gap.
pub fn validate_settle(schedule: &TriggerSchedule, settle_time_ms: f64) -> SettleReport {
    let violations: Vec<SettleViolation> = schedule
        .slices
        .windows(2)
        .enumerate()
        .filter_map(|(k, w)| {
            let window = w[1].exposure_start - w[0].galvo_step_issue;
            // Absorb rounding in the accumulated event times.
            (settle_time_ms > window + 1e-9).then_some(SettleViolation {
                after_slice: k,
                settle_ms: settle_time_ms,
                window_ms: window,
            })
        })
        .collect();
    SettleReport {
        passed: violations.is_empty(),
        gaps_checked: schedule.slices.len().saturating_sub(1),
        violations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalvoWaveform {
    /// One level per slice, volts; the sweep ends with a flyback to `levels[0]`.
    pub levels: Vec<f64>,
    pub volts_per_um: f64,
    pub settle_time_ms: f64,
}

impl GalvoWaveform {
    /// Output voltage for frame `k` of a continuous acquisition.
    pub fn level_for_frame(&self, k: usize) -> f64 {
        self.levels[k % self.levels.len()]
    }
}

/// Default settle time for the staircase; well inside the calibrated readout.
pub const DEFAULT_SETTLE_MS: f64 = 0.5;

/// Staircase drive: level `k = k·Δ·volts_per_um`.
pub fn galvo_staircase(geom: &SheetGeometry, volts_per_um: f64) -> Result<GalvoWaveform> {
    if !(volts_per_um > 0.0 && volts_per_um.is_finite()) {
        return Err(Error::param(format!("volts per µm must be positive, got {volts_per_um}")));
    }
    let levels = (0..geom.slice_count)
        .map(|k| k as f64 * geom.scan_step_um * volts_per_um)
        .collect();
    Ok(GalvoWaveform { levels, volts_per_um, settle_time_ms: DEFAULT_SETTLE_MS })
}
