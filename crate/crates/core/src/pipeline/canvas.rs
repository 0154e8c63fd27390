use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{output_extent, split_offset};
use crate::{Error, Image16, RawFrame, Result, SheetGeometry};

/// Canvases at or above this many pixels place rows in parallel.
const PARALLEL_PIXELS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Whole-row shift; offset rounded half up. Bit-exact against the
    /// reference deskew.
    Nearest,
    /// Fractional offsets split across two adjacent rows.
    #[default]
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Emit once per completed stack.
    #[default]
    Global,
    /// Emit after every exposure, replacing that slice's contribution.
    Rolling,
}

/// Half-open interval of canvas rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowSpan {
    pub start: usize,
    pub end: usize,
}

impl RowSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn union(&self, other: &RowSpan) -> RowSpan {
        RowSpan { start: self.start.min(other.start), end: self.end.max(other.end) }
    }

    pub fn intersect(&self, other: &RowSpan) -> RowSpan {
        let start = self.start.max(other.start);
        RowSpan { start, end: self.end.min(other.end).max(start) }
    }
}

/// Where a slice lands on the canvas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub base_row: usize,
    /// Weight given to the row below; zero for whole-row placements.
    pub frac: f64,
    pub frame_rows: usize,
}

impl Placement {
    pub fn new(slice_index: usize, shear_px: f64, frame_rows: usize, interp: Interpolation) -> Self {
        let offset = slice_index as f64 * shear_px;
        match interp {
            Interpolation::Nearest => Self {
                base_row: (offset + 0.5).floor() as usize,
                frac: 0.0,
                frame_rows,
            },
            Interpolation::Linear => {
                let (base_row, frac) = split_offset(offset);
                Self { base_row, frac, frame_rows }
            }
        }
    }

    pub fn span(&self) -> RowSpan {
        let extra = usize::from(self.frac > 0.0);
        RowSpan { start: self.base_row, end: self.base_row + self.frame_rows + extra }
    }

    /// Resampled slice values for canvas row `row`, which must lie in
    /// [`Placement::span`].
    #[inline]
    pub fn fill_row(&self, frame: &RawFrame, row: usize, out: &mut [u16]) {
        let j = row - self.base_row;
        if self.frac == 0.0 {
            out.copy_from_slice(frame.row(j));
            return;
        }
        let (keep, take) = (1.0 - self.frac, self.frac);
        let here = (j < frame.height).then(|| frame.row(j));
        let above = (j >= 1).then(|| frame.row(j - 1));
        for (x, o) in out.iter_mut().enumerate() {
            let a = here.map_or(0.0, |r| f64::from(r[x]));
            let b = above.map_or(0.0, |r| f64::from(r[x]));
            *o = (keep * a + take * b + 0.5).floor() as u16;
        }
    }

    /// Max-accumulates the resampled slice into `row_buf`.
    #[inline]
    pub fn max_row_into(&self, frame: &RawFrame, row: usize, row_buf: &mut [u16]) {
        let j = row - self.base_row;
        if self.frac == 0.0 {
            for (c, &v) in row_buf.iter_mut().zip(frame.row(j)) {
                *c = (*c).max(v);
            }
            return;
        }
        let (keep, take) = (1.0 - self.frac, self.frac);
        let here = (j < frame.height).then(|| frame.row(j));
        let above = (j >= 1).then(|| frame.row(j - 1));
        for (x, c) in row_buf.iter_mut().enumerate() {
            let a = here.map_or(0.0, |r| f64::from(r[x]));
            let b = above.map_or(0.0, |r| f64::from(r[x]));
            let v = (keep * a + take * b + 0.5).floor() as u16;
            *c = (*c).max(v);
        }
    }
}

/// The enlarged `X × U` max-projection buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionCanvas {
    pub image: Image16,
}

impl ProjectionCanvas {
    pub fn for_geometry(geom: &SheetGeometry, shear_px: f64) -> Result<Self> {
        let (w, h) = output_extent(geom, shear_px)?;
        Ok(Self { image: Image16::zeros(w, h) })
    }

    pub fn width(&self) -> usize {
        self.image.width
    }

    pub fn height(&self) -> usize {
        self.image.height
    }

    pub fn clear(&mut self) {
        self.image.pixels.fill(0);
    }
}

/// Places one slice at `slice_index · shear_px`, max-accumulating into the
/// canvas. Returns the rows touched.
pub fn deskew_place(
    canvas: &mut ProjectionCanvas,
    frame: &RawFrame,
    shear_px: f64,
    interp: Interpolation,
) -> Result<RowSpan> {
    if frame.width != canvas.width() {
        return Err(Error::param(format!(
            "frame width {} does not match canvas width {}",
            frame.width,
            canvas.width()
        )));
    }
    let placement = Placement::new(frame.slice_index, shear_px, frame.height, interp);
    let span = placement.span();
    if span.end > canvas.height() {
        return Err(Error::Capacity(format!(
            "slice {} needs rows {}..{} but the canvas has {}",
            frame.slice_index,
            span.start,
            span.end,
            canvas.height()
        )));
    }
    let width = canvas.width();
    let band = &mut canvas.image.pixels[span.start * width..span.end * width];
    if band.len() >= PARALLEL_PIXELS {
        band.par_chunks_mut(width).enumerate().for_each(|(k, row)| {
            placement.max_row_into(frame, span.start + k, row);
        });
    } else {
        for (k, row) in band.chunks_mut(width).enumerate() {
            placement.max_row_into(frame, span.start + k, row);
        }
    }
    Ok(span)
}

/// Global-mode stack state: accumulates one sweep, emits when complete.
#[derive(Debug, Clone)]
pub struct GlobalAccumulator {
    geom: SheetGeometry,
    shear_px: f64,
    interp: Interpolation,
    canvas: ProjectionCanvas,
    placed: Vec<bool>,
    placed_count: usize,
    sweep_index: Option<u64>,
}

impl GlobalAccumulator {
    pub fn new(geom: SheetGeometry, shear_px: f64, interp: Interpolation) -> Result<Self> {
        Ok(Self {
            canvas: ProjectionCanvas::for_geometry(&geom, shear_px)?,
            placed: vec![false; geom.slice_count],
            placed_count: 0,
            sweep_index: None,
            geom,
            shear_px,
            interp,
        })
    }

    pub fn shear_px(&self) -> f64 {
        self.shear_px
    }

    pub fn sweep_index(&self) -> Option<u64> {
        self.sweep_index
    }

    pub fn placed_count(&self) -> usize {
        self.placed_count
    }

    pub fn is_complete(&self) -> bool {
        self.placed_count == self.geom.slice_count
    }

    pub fn canvas(&self) -> &ProjectionCanvas {
        &self.canvas
    }

    pub fn place(&mut self, frame: &RawFrame) -> Result<RowSpan> {
        if frame.slice_index >= self.geom.slice_count {
            return Err(Error::SliceIndex { index: frame.slice_index, count: self.geom.slice_count });
        }
        if frame.height != self.geom.frame_height_px {
            return Err(Error::param(format!(
                "frame height {} does not match geometry height {}",
                frame.height, self.geom.frame_height_px
            )));
        }
        match self.sweep_index {
            Some(s) if s != frame.sweep_index => {
                return Err(Error::Protocol(format!(
                    "frame from sweep {} placed into unfinished sweep {s}",
                    frame.sweep_index
                )))
            }
            _ => self.sweep_index = Some(frame.sweep_index),
        }
        let span = deskew_place(&mut self.canvas, frame, self.shear_px, self.interp)?;
        if !self.placed[frame.slice_index] {
            self.placed[frame.slice_index] = true;
            self.placed_count += 1;
        }
        Ok(span)
    }

    /// Emits the full-stack projection and resets for the next sweep.
    pub fn finalize(&mut self) -> Result<Image16> {
        if !self.is_complete() {
            return Err(Error::Protocol(format!(
                "finalize after {} of {} slices",
                self.placed_count, self.geom.slice_count
            )));
        }
        Ok(self.take())
    }

    /// Emits whatever has accumulated (for interrupted sweeps) and resets.
    pub fn finalize_partial(&mut self) -> Image16 {
        self.take()
    }

    /// Drops the in-flight stack and switches shear for the next one.
    pub fn reconfigure(&mut self, shear_px: f64, interp: Interpolation) -> Result<()> {
        *self = Self::new(self.geom, shear_px, interp)?;
        Ok(())
    }

    fn take(&mut self) -> Image16 {
        let out = self.canvas.image.clone();
        self.canvas.clear();
        self.placed.fill(false);
        self.placed_count = 0;
        self.sweep_index = None;
        out
    }
}
