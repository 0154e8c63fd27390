//! Per-stack stage timings, lag modelling and bottleneck classification.

use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Durations for one stack, ms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub acquisition_ms: f64,
    pub processing_ms: f64,
    pub plotting_ms: f64,
    /// Last slice acquired to projection emitted.
    pub lag_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bottleneck {
    AcquisitionLimited,
    ProcessingLimited,
    PlottingLimited,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BottleneckReport {
    pub bottleneck: Bottleneck,
    /// Least-squares slope of lag against stack index, ms per stack.
    pub lag_slope_ms_per_stack: f64,
    pub lag_bounded: bool,
    pub mean: StageTimings,
}

/// Lag slopes below this fraction of the mean stack period count as flat.
const FLAT_LAG_FRACTION: f64 = 0.05;

pub const MIN_HISTORY: usize = 3;

/// Picks the slowest stage (acquisition wins ties) and fits the lag trend.
pub fn classify_bottleneck(history: &[StageTimings]) -> Result<BottleneckReport> {
    if history.len() < MIN_HISTORY {
        return Err(Error::InsufficientHistory { need: MIN_HISTORY, have: history.len() });
    }
    let n = history.len() as f64;
    let mean = StageTimings {
        acquisition_ms: history.iter().map(|t| t.acquisition_ms).sum::<f64>() / n,
        processing_ms: history.iter().map(|t| t.processing_ms).sum::<f64>() / n,
        plotting_ms: history.iter().map(|t| t.plotting_ms).sum::<f64>() / n,
        lag_ms: history.iter().map(|t| t.lag_ms).sum::<f64>() / n,
    };
    let bottleneck = if mean.acquisition_ms >= mean.processing_ms && mean.acquisition_ms >= mean.plotting_ms {
        Bottleneck::AcquisitionLimited
    } else if mean.processing_ms >= mean.plotting_ms {
        Bottleneck::ProcessingLimited
    } else {
        Bottleneck::PlottingLimited
    };
    let lags: Vec<f64> = history.iter().map(|t| t.lag_ms).collect();
    let slope = least_squares_slope(&lags);
    let period = mean.acquisition_ms.max(mean.processing_ms).max(mean.plotting_ms);
    Ok(BottleneckReport {
        bottleneck,
        lag_slope_ms_per_stack: slope,
        lag_bounded: slope.abs() <= FLAT_LAG_FRACTION * period,
        mean,
    })
}

/// Slope of `ys` against their index.
pub fn least_squares_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Stage durations of one stack before queueing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageCost {
    pub acquisition_ms: f64,
    pub processing_ms: f64,
    pub plotting_ms: f64,
}

/// Completion times of one stack on the three-stage timeline, ms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackEvents {
    pub acquired_ms: f64,
    pub processed_ms: f64,
    pub emitted_ms: f64,
}

/// Tandem of three FIFO servers (acquire → process → plot) with unbounded
/// queues, advanced one stack at a time.
///
/// Processing overlaps acquisition slice by slice, so a stack's processing
/// finishes no earlier than `1/N` of its processing time after its last
/// slice lands, and never before the previous stack is done.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timeline {
    per_slice: f64,
    acquired: f64,
    processed: f64,
    emitted: f64,
}

impl Timeline {
    pub fn new(slices_per_stack: usize) -> Self {
        Self { per_slice: 1.0 / slices_per_stack.max(1) as f64, ..Self::default() }
    }

    pub fn push(&mut self, c: &StageCost) -> StackEvents {
        let start = self.acquired;
        self.acquired += c.acquisition_ms;
        self.processed = (start + c.processing_ms)
            .max(self.acquired + c.processing_ms * self.per_slice)
            .max(self.processed + c.processing_ms);
        self.emitted = self.processed.max(self.emitted) + c.plotting_ms;
        StackEvents { acquired_ms: self.acquired, processed_ms: self.processed, emitted_ms: self.emitted }
    }
}

pub fn simulate_timeline(costs: &[StageCost], slices_per_stack: usize) -> Vec<StackEvents> {
    let mut t = Timeline::new(slices_per_stack);
    costs.iter().map(|c| t.push(c)).collect()
}

/// Stage timings with lag, as the timeline would report them.
pub fn timings_from_costs(costs: &[StageCost], slices_per_stack: usize) -> Vec<StageTimings> {
    simulate_timeline(costs, slices_per_stack)
        .iter()
        .zip(costs)
        .map(|(e, c)| StageTimings {
            acquisition_ms: c.acquisition_ms,
            processing_ms: c.processing_ms,
            plotting_ms: c.plotting_ms,
            lag_ms: e.emitted_ms - e.acquired_ms,
        })
        .collect()
}

/// Live counters, JSON-serializable for the wire and for reports.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TelemetrySnapshot {
    pub last: StageTimings,
    pub emissions: u64,
    pub fps: f64,
    pub lag_ms: f64,
    /// Frames or projections discarded by drop-oldest queues.
    pub drops: u64,
    pub incomplete_stacks: u64,
    pub max_queue_depth: usize,
}

/// Publishes whole snapshots; readers never observe a half-updated one.
#[derive(Debug, Clone, Default)]
pub struct TelemetryHub {
    current: Arc<Mutex<Arc<TelemetrySnapshot>>>,
}

impl TelemetryHub {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&self) -> Arc<TelemetrySnapshot> {
        self.current.lock().clone()
    }

    pub fn update(&self, f: impl FnOnce(&mut TelemetrySnapshot)) {
        let mut guard = self.current.lock();
        let mut next = (**guard).clone();
        f(&mut next);
        *guard = Arc::new(next);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(acq: f64, proc: f64, plot: f64, stacks: usize) -> Vec<StageTimings> {
        let costs = vec![StageCost { acquisition_ms: acq, processing_ms: proc, plotting_ms: plot }; stacks];
        timings_from_costs(&costs, 50)
    }

    #[test]
    fn acquisition_limited_has_flat_lag() {
        let r = classify_bottleneck(&scenario(80.0, 20.0, 10.0, 20)).unwrap();
        assert_eq!(r.bottleneck, Bottleneck::AcquisitionLimited);
        assert!(r.lag_slope_ms_per_stack.abs() < 1e-9);
        assert!(r.lag_bounded);
    }

    #[test]
    fn processing_limited_lag_grows_by_the_deficit() {
        let r = classify_bottleneck(&scenario(20.0, 80.0, 10.0, 20)).unwrap();
        assert_eq!(r.bottleneck, Bottleneck::ProcessingLimited);
        assert!((r.lag_slope_ms_per_stack - 60.0).abs() < 1e-9);
        assert!(!r.lag_bounded);
    }

    #[test]
    fn plotting_limited_lag_grows() {
        let r = classify_bottleneck(&scenario(20.0, 10.0, 80.0, 20)).unwrap();
        assert_eq!(r.bottleneck, Bottleneck::PlottingLimited);
        assert!((r.lag_slope_ms_per_stack - 60.0).abs() < 1e-9);
    }

    #[test]
    fn ties_go_to_acquisition() {
        let r = classify_bottleneck(&scenario(30.0, 30.0, 30.0, 5)).unwrap();
        assert_eq!(r.bottleneck, Bottleneck::AcquisitionLimited);
    }

    #[test]
    fn short_history_is_an_error() {
        assert!(matches!(
            classify_bottleneck(&scenario(1.0, 1.0, 1.0, 2)),
            Err(Error::InsufficientHistory { need: 3, have: 2 })
        ));
    }

    #[test]
    fn hub_publishes_whole_snapshots() {
        let hub = TelemetryHub::new();
        let before = hub.snapshot();
        hub.update(|s| {
            s.emissions = 3;
            s.drops = 1;
        });
        assert_eq!(before.emissions, 0);
        let after = hub.snapshot();
        assert_eq!((after.emissions, after.drops), (3, 1));
    }
}
