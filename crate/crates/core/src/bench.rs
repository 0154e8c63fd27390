//! Parameter sweeps over exposure, slice count and scan-axis field of view,
//! measuring per-stage cost on the simulated end-to-end system.
//!
//! Acquisition time is taken from the camera's virtual clock, so it is
//! exact. Processing and plotting are wall-clock measurements: each point
//! runs several stacks, takes the median per stack, and keeps the minimum
//! over repeats.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::VirtualClock;
use crate::phantom::{Extent, PhantomScene, Primitive};
use crate::pipeline::{
    classify_bottleneck, run_deterministic, Bottleneck, ChannelLayout, DisplayImage, Interpolation,
    StageTimings, UpdateMode, ViewParams,
};
use crate::source::{CameraTiming, SimulatedCamera};
use crate::{Result, SheetGeometry};

/// Plot-stage work applied to every emitted image after warping.
pub type PlotEncoder<'a> = &'a (dyn Fn(&DisplayImage) -> usize + Sync);

/// Default plot stage: 8-bit display conversion.
pub fn gray8_encoder(d: &DisplayImage) -> usize {
    std::hint::black_box(d.image.to_gray8()).pixels.len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub alpha_deg: f64,
    pub pixel_pitch_um: f64,
    pub frame_width_px: usize,
    pub frame_height_px: usize,
    pub readout_ms: f64,
    /// Values held fixed while another variable is swept.
    pub base_exposure_ms: f64,
    pub base_slices: usize,
    pub base_fov_um: f64,
    pub exposures_ms: Vec<f64>,
    pub slice_counts: Vec<usize>,
    /// Scan-axis field of view, `(N − 1)·Δ`.
    pub fovs_um: Vec<f64>,
    /// Stacks measured per repeat (one extra warm-up stack is discarded).
    pub stacks: usize,
    pub repeats: usize,
    pub seed: u64,
    pub crossover: CrossoverConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            alpha_deg: 30.0,
            pixel_pitch_um: 0.25,
            frame_width_px: 512,
            frame_height_px: 16,
            readout_ms: crate::source::CALIBRATED_READOUT_MS,
            base_exposure_ms: 0.1,
            base_slices: 20,
            base_fov_um: 400.0,
            exposures_ms: vec![0.1, 0.5, 1.0, 2.0, 5.0],
            slice_counts: vec![10, 20, 40, 80, 160],
            fovs_um: vec![250.0, 500.0, 1000.0, 2000.0, 4000.0],
            stacks: 6,
            repeats: 5,
            seed: 7,
            crossover: CrossoverConfig::default(),
        }
    }
}

/// Search for the canvas size at which a run stops being
/// acquisition-limited, for each exposure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverConfig {
    pub exposures_ms: Vec<f64>,
    pub slices: usize,
    pub readout_ms: f64,
    pub start_fov_um: f64,
    /// Multiplicative FOV step between probes.
    pub growth: f64,
    pub max_canvas_px: u64,
}

impl Default for CrossoverConfig {
    fn default() -> Self {
        Self {
            exposures_ms: vec![0.1, 0.5],
            slices: 10,
            readout_ms: 0.1,
            start_fov_um: 25.0,
            growth: 1.25,
            max_canvas_px: 64 << 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    ExposureMs,
    Slices,
    FovUm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Acquisition,
    Processing,
    Plotting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Invariant,
    Unclear,
}

/// Expected dependency of each stage on each swept variable.
pub fn expected_trend(variable: SweepVariable, stage: Stage) -> Trend {
    use Stage::*;
    use SweepVariable::*;
    match (variable, stage) {
        (ExposureMs, Acquisition) => Trend::Increasing,
        (ExposureMs, _) => Trend::Invariant,
        (Slices, Plotting) => Trend::Invariant,
        (Slices, _) => Trend::Increasing,
        (FovUm, Acquisition) => Trend::Invariant,
        (FovUm, _) => Trend::Increasing,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub value: f64,
    pub exposure_ms: f64,
    pub slices: usize,
    pub fov_um: f64,
    pub canvas_px: u64,
    pub acquisition_ms: f64,
    pub processing_ms: f64,
    pub plotting_ms: f64,
    /// Largest `(max − min)/min` across repeats over the measured stages.
    pub repeat_spread: f64,
}

impl PointResult {
    pub fn stage_ms(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Acquisition => self.acquisition_ms,
            Stage::Processing => self.processing_ms,
            Stage::Plotting => self.plotting_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub variable: SweepVariable,
    pub points: Vec<PointResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub variable: SweepVariable,
    pub stage: Stage,
    pub expected: Trend,
    pub observed: Trend,
    pub kendall_tau: f64,
    pub relative_spread: f64,
    pub noise_band: f64,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    pub exposure_ms: f64,
    pub slices: usize,
    pub stack_period_ms: f64,
    /// First probed canvas that was not acquisition-limited.
    pub canvas_px: Option<u64>,
    pub fov_um: Option<f64>,
    pub bottleneck: Option<Bottleneck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub sweeps: Vec<SweepResult>,
    pub matrix: Vec<MatrixCell>,
    pub crossovers: Vec<Crossover>,
}

impl BenchReport {
    pub fn all_cells_agree(&self) -> bool {
        self.matrix.iter().all(|c| c.agrees)
    }

    pub fn crossover_ordering_holds(&self) -> bool {
        let mut c = self.crossovers.clone();
        c.sort_by(|a, b| a.exposure_ms.total_cmp(&b.exposure_ms));
        c.windows(2).all(|w| match (w[0].canvas_px, w[1].canvas_px) {
            (Some(a), Some(b)) => a < b,
            (Some(_), None) => true,
            _ => false,
        })
    }
}

/// Kendall rank correlation (tau-a) of `ys` against their index.
pub fn kendall_tau(ys: &[f64]) -> f64 {
    let n = ys.len();
    if n < 2 {
        return 0.0;
    }
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            score += match ys[j].partial_cmp(&ys[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    score as f64 / (n * (n - 1) / 2) as f64
}

/// `(max − min) / median`.
pub fn relative_spread(ys: &[f64]) -> f64 {
    let mut v = ys.to_vec();
    v.sort_by(f64::total_cmp);
    let median = v[v.len() / 2];
    if median <= 0.0 {
        return if v[v.len() - 1] > 0.0 { f64::INFINITY } else { 0.0 };
    }
    (v[v.len() - 1] - v[0]) / median
}

/// Invariance band never drops below this relative spread.
pub const INVARIANT_FLOOR: f64 = 0.25;
pub const INCREASING_TAU: f64 = 0.9;

/// Labels a series. A series inside the noise band is invariant; outside it
/// and rank-correlated above [`INCREASING_TAU`] it is increasing.
pub fn classify_trend(ys: &[f64], noise_band: f64) -> (Trend, f64, f64) {
    let tau = kendall_tau(ys);
    let spread = relative_spread(ys);
    let trend = if spread <= noise_band {
        Trend::Invariant
    } else if tau > INCREASING_TAU {
        Trend::Increasing
    } else {
        Trend::Unclear
    };
    (trend, tau, spread)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scene of a few spheres spread through the imaged volume.
pub fn bench_scene(geom: &SheetGeometry, seed: u64) -> Result<PhantomScene> {
    let x = geom.frame_width_px as f64 * geom.pixel_pitch_um;
    let depth = geom.frame_height_px as f64 * geom.pixel_pitch_um;
    let y = (geom.slice_count - 1) as f64 * geom.scan_step_um + depth * geom.alpha_rad().cos();
    let h = depth * geom.alpha_rad().sin();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let primitives = (0..12)
        .map(|_| Primitive::Sphere {
            center_um: [rng.gen_range(0.0..x), rng.gen_range(0.0..y), rng.gen_range(0.0..h.max(1e-3))],
            radius_um: rng.gen_range(0.5..2.0) * h.max(1.0),
            intensity: rng.gen_range(500..4000),
        })
        .collect();
    PhantomScene::new(Extent { min_um: [0.0; 3], max_um: [x, y, h] }, primitives)
}

fn point_geometry(cfg: &BenchConfig, slices: usize, fov_um: f64) -> Result<SheetGeometry> {
    SheetGeometry::new(
        cfg.alpha_deg,
        fov_um / (slices.max(2) - 1) as f64,
        cfg.pixel_pitch_um,
        slices,
        cfg.frame_width_px,
        cfg.frame_height_px,
    )
}

/// A parameter point ready to be timed.
struct PointSetup {
    geom: SheetGeometry,
    timing: CameraTiming,
    scene: PhantomScene,
    params: ViewParams,
    frames: u64,
    canvas_px: u64,
    exposure_ms: f64,
    slices: usize,
    fov_um: f64,
}

impl PointSetup {
    fn new(cfg: &BenchConfig, exposure_ms: f64, readout_ms: f64, slices: usize, fov_um: f64) -> Result<Self> {
        let geom = point_geometry(cfg, slices, fov_um)?;
        let params = ViewParams {
            mode: UpdateMode::Global,
            interp: Interpolation::Linear,
            ..ViewParams::native(&geom)
        };
        let (_, canvas_rows) = crate::geometry::output_extent(&geom, params.shear_px)?;
        Ok(Self {
            timing: CameraTiming::new(exposure_ms, readout_ms)?,
            scene: bench_scene(&geom, cfg.seed)?,
            params,
            frames: ((cfg.stacks + 1) * slices) as u64,
            canvas_px: (canvas_rows * geom.frame_width_px) as u64,
            geom,
            exposure_ms,
            slices,
            fov_um,
        })
    }

    /// One repeat: per-stack medians, skipping the warm-up stack.
    fn time_once(&self, encoder: PlotEncoder<'_>) -> Result<StageTimings> {
        let mut cam = SimulatedCamera::new(self.scene.clone(), self.geom, self.timing, Arc::new(VirtualClock::new()))?;
        let layout = ChannelLayout::single(self.geom.frame_width_px, self.geom.frame_height_px);
        let summary = run_deterministic(&mut cam, layout, self.params.clone(), Some(self.frames), &mut |d| {
            encoder(&d);
            Ok(())
        })?;
        let stacks = &summary.timings[1.min(summary.timings.len())..];
        Ok(StageTimings {
            acquisition_ms: median(stacks.iter().map(|t| t.acquisition_ms).collect()),
            processing_ms: median(stacks.iter().map(|t| t.processing_ms).collect()),
            plotting_ms: median(stacks.iter().map(|t| t.plotting_ms).collect()),
            lag_ms: median(stacks.iter().map(|t| t.lag_ms).collect()),
        })
    }

    fn result(&self, per_repeat: &[StageTimings]) -> PointResult {
        let min_of = |f: fn(&StageTimings) -> f64| per_repeat.iter().map(f).fold(f64::INFINITY, f64::min);
        let spread_of = |f: fn(&StageTimings) -> f64| {
            let lo = min_of(f);
            let hi = per_repeat.iter().map(f).fold(0.0, f64::max);
            if lo > 0.0 {
                (hi - lo) / lo
            } else {
                0.0
            }
        };
        PointResult {
            value: 0.0,
            exposure_ms: self.exposure_ms,
            slices: self.slices,
            fov_um: self.fov_um,
            canvas_px: self.canvas_px,
            acquisition_ms: min_of(|t| t.acquisition_ms),
            processing_ms: min_of(|t| t.processing_ms),
            plotting_ms: min_of(|t| t.plotting_ms),
            repeat_spread: spread_of(|t| t.processing_ms).max(spread_of(|t| t.plotting_ms)),
        }
    }
}

/// Measures one parameter point.
pub fn measure_point(
    cfg: &BenchConfig,
    exposure_ms: f64,
    readout_ms: f64,
    slices: usize,
    fov_um: f64,
    encoder: PlotEncoder<'_>,
) -> Result<PointResult> {
    let setup = PointSetup::new(cfg, exposure_ms, readout_ms, slices, fov_um)?;
    let per_repeat = (0..cfg.repeats.max(1)).map(|_| setup.time_once(encoder)).collect::<Result<Vec<_>>>()?;
    Ok(setup.result(&per_repeat))
}

/// Runs one sweep. Repeats are interleaved across points so a transient
/// slowdown of the host lands on one repeat of every point rather than on
/// every repeat of one point.
pub fn run_sweep(cfg: &BenchConfig, variable: SweepVariable, encoder: PlotEncoder<'_>) -> Result<SweepResult> {
    let values: Vec<f64> = match variable {
        SweepVariable::ExposureMs => cfg.exposures_ms.clone(),
        SweepVariable::Slices => cfg.slice_counts.iter().map(|&n| n as f64).collect(),
        SweepVariable::FovUm => cfg.fovs_um.clone(),
    };
    let setups = values
        .iter()
        .map(|&v| {
            let (e, n, fov) = match variable {
                SweepVariable::ExposureMs => (v, cfg.base_slices, cfg.base_fov_um),
                SweepVariable::Slices => (cfg.base_exposure_ms, v as usize, cfg.base_fov_um),
                SweepVariable::FovUm => (cfg.base_exposure_ms, cfg.base_slices, v),
            };
            PointSetup::new(cfg, e, cfg.readout_ms, n, fov)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut timings: Vec<Vec<StageTimings>> = vec![Vec::new(); setups.len()];
    for _ in 0..cfg.repeats.max(1) {
        for (setup, t) in setups.iter().zip(&mut timings) {
            t.push(setup.time_once(encoder)?);
        }
    }
    let points = setups
        .iter()
        .zip(&timings)
        .zip(&values)
        .map(|((setup, t), &v)| PointResult { value: v, ..setup.result(t) })
        .collect();
    Ok(SweepResult { variable, points })
}

/// Classifies every (variable, stage) cell of the dependency matrix.
pub fn dependency_matrix(sweeps: &[SweepResult]) -> Vec<MatrixCell> {
    let mut cells = Vec::new();
    for sweep in sweeps {
        let noise = sweep.points.iter().map(|p| p.repeat_spread).fold(0.0, f64::max);
        for stage in [Stage::Acquisition, Stage::Processing, Stage::Plotting] {
            let ys: Vec<f64> = sweep.points.iter().map(|p| p.stage_ms(stage)).collect();
            let band = INVARIANT_FLOOR.max(2.0 * noise);
            let (observed, tau, spread) = classify_trend(&ys, band);
            let expected = expected_trend(sweep.variable, stage);
            cells.push(MatrixCell {
                variable: sweep.variable,
                stage,
                expected,
                observed,
                kendall_tau: tau,
                relative_spread: spread,
                noise_band: band,
                agrees: observed == expected,
            });
        }
    }
    cells
}

/// Grows the scan-axis FOV geometrically until processing or plotting
/// outlasts acquisition.
pub fn find_crossover(cfg: &BenchConfig, exposure_ms: f64, encoder: PlotEncoder<'_>) -> Result<Crossover> {
    let c = &cfg.crossover;
    let stack_period_ms = c.slices as f64 * (exposure_ms + c.readout_ms);
    let mut fov = c.start_fov_um;
    loop {
        let p = measure_point(cfg, exposure_ms, c.readout_ms, c.slices, fov, encoder)?;
        if p.canvas_px > c.max_canvas_px {
            return Ok(Crossover {
                exposure_ms,
                slices: c.slices,
                stack_period_ms,
                canvas_px: None,
                fov_um: None,
                bottleneck: None,
            });
        }
        let t = StageTimings {
            acquisition_ms: p.acquisition_ms,
            processing_ms: p.processing_ms,
            plotting_ms: p.plotting_ms,
            lag_ms: 0.0,
        };
        let report = classify_bottleneck(&[t; 3])?;
        if report.bottleneck != Bottleneck::AcquisitionLimited {
            return Ok(Crossover {
                exposure_ms,
                slices: c.slices,
                stack_period_ms,
                canvas_px: Some(p.canvas_px),
                fov_um: Some(fov),
                bottleneck: Some(report.bottleneck),
            });
        }
        fov *= c.growth;
    }
}

pub fn run_bench(cfg: &BenchConfig, encoder: PlotEncoder<'_>) -> Result<BenchReport> {
    let sweeps = [SweepVariable::ExposureMs, SweepVariable::Slices, SweepVariable::FovUm]
        .into_iter()
        .map(|v| run_sweep(cfg, v, encoder))
        .collect::<Result<Vec<_>>>()?;
    let matrix = dependency_matrix(&sweeps);
    let crossovers = cfg
        .crossover
        .exposures_ms
        .iter()
        .map(|&e| find_crossover(cfg, e, encoder))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport { config: cfg.clone(), sweeps, matrix, crossovers })
}

fn variable_label(v: SweepVariable) -> &'static str {
    match v {
        SweepVariable::ExposureMs => "Increasing camera exposure time",
        SweepVariable::Slices => "Increasing number of slices per stack",
        SweepVariable::FovUm => "Increasing field of view along the scan axis",
    }
}

fn trend_label(t: Trend) -> &'static str {
    match t {
        Trend::Increasing => "increasing",
        Trend::Invariant => "invariant",
        Trend::Unclear => "unclear",
    }
}

/// Plain-text table of observed trends, one row per swept variable.
pub fn render_table(report: &BenchReport) -> String {
    let mut out = format!(
        "{:<46} {:<14} {:<14} {:<14}\n",
        "", "acquisition", "processing", "plotting"
    );
    for sweep in &report.sweeps {
        let cell = |stage| {
            report
                .matrix
                .iter()
                .find(|c| c.variable == sweep.variable && c.stage == stage)
                .map(|c| format!("{}{}", trend_label(c.observed), if c.agrees { "" } else { " (!)" }))
                .unwrap_or_default()
        };
        out.push_str(&format!(
            "{:<46} {:<14} {:<14} {:<14}\n",
            variable_label(sweep.variable),
            cell(Stage::Acquisition),
            cell(Stage::Processing),
            cell(Stage::Plotting)
        ));
    }
    for c in &report.crossovers {
        match c.canvas_px {
            Some(px) => out.push_str(&format!(
                "crossover at exposure {} ms, N = {}: {:.2} MP ({:?})\n",
                c.exposure_ms,
                c.slices,
                px as f64 / 1e6,
                c.bottleneck.unwrap_or(Bottleneck::AcquisitionLimited)
            )),
            None => out.push_str(&format!(
                "crossover at exposure {} ms, N = {}: not reached\n",
                c.exposure_ms, c.slices
            )),
        }
    }
    out
}
