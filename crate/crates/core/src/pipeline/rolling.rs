//! Rolling update: the projection is refreshed after every exposure by
//! swapping one slice's contribution.
//!
//! The ring holds the most recent frame for each slice index. Replacing a
//! slice recomputes the maximum only over the union of the rows the old and
//! new copies touch, so each update costs `O(band)` rather than `O(canvas)`.

use super::canvas::{Interpolation, Placement, ProjectionCanvas, RowSpan};
use crate::{Error, Image16, RawFrame, Result, SheetGeometry};

/// No slice contributes to this pixel.
pub const NO_CONTRIBUTOR: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct RingEntry {
    frame: RawFrame,
    placement: Placement,
}

#[derive(Debug, Clone)]
pub struct RollingState {
    geom: SheetGeometry,
    shear_px: f64,
    interp: Interpolation,
    canvas: ProjectionCanvas,
    contributor: Vec<u32>,
    ring: Vec<Option<RingEntry>>,
    scratch: Vec<u16>,
}

impl RollingState {
    pub fn new(geom: SheetGeometry, shear_px: f64, interp: Interpolation) -> Result<Self> {
        let canvas = ProjectionCanvas::for_geometry(&geom, shear_px)?;
        let pixels = canvas.width() * canvas.height();
        Ok(Self {
            contributor: vec![NO_CONTRIBUTOR; pixels],
            ring: vec![None; geom.slice_count],
            scratch: vec![0; geom.frame_width_px],
            canvas,
            geom,
            shear_px,
            interp,
        })
    }

    pub fn shear_px(&self) -> f64 {
        self.shear_px
    }

    pub fn image(&self) -> &Image16 {
        &self.canvas.image
    }

    /// Slice index whose value each canvas pixel shows, or [`NO_CONTRIBUTOR`].
    pub fn contributors(&self) -> &[u32] {
        &self.contributor
    }

    /// Number of slice indices currently held.
    pub fn live_slices(&self) -> usize {
        self.ring.iter().filter(|e| e.is_some()).count()
    }

    pub fn is_full(&self) -> bool {
        self.live_slices() == self.geom.slice_count
    }

    /// Sweep index of the ring entry for `slice_index`, if present.
    pub fn entry_sweep(&self, slice_index: usize) -> Option<u64> {
        self.ring.get(slice_index)?.as_ref().map(|e| e.frame.sweep_index)
    }

    /// Evicts the previous frame for this slice index, installs the new one
    /// and recomputes the affected band. Returns that band.
    pub fn replace(&mut self, frame: RawFrame) -> Result<RowSpan> {
        if frame.slice_index >= self.geom.slice_count {
            return Err(Error::SliceIndex { index: frame.slice_index, count: self.geom.slice_count });
        }
        if frame.width != self.canvas.width() || frame.height != self.geom.frame_height_px {
            return Err(Error::param(format!(
                "frame {}x{} does not match the {}x{} slice geometry",
                frame.width,
                frame.height,
                self.canvas.width(),
                self.geom.frame_height_px
            )));
        }
        let placement = Placement::new(frame.slice_index, self.shear_px, frame.height, self.interp);
        let new_span = placement.span();
        let idx = frame.slice_index;
        let band = match self.ring[idx].take() {
            Some(old) => old.placement.span().union(&new_span),
            None => new_span,
        };
        self.ring[idx] = Some(RingEntry { frame, placement });
        self.recompute(band);
        Ok(band)
    }

    /// Re-places every held slice under a new shear; the canvas is resized
    /// to the new extent.
    pub fn reshear(&mut self, shear_px: f64, interp: Interpolation) -> Result<()> {
        let canvas = ProjectionCanvas::for_geometry(&self.geom, shear_px)?;
        self.contributor = vec![NO_CONTRIBUTOR; canvas.width() * canvas.height()];
        self.canvas = canvas;
        self.shear_px = shear_px;
        self.interp = interp;
        for entry in self.ring.iter_mut().flatten() {
            entry.placement = Placement::new(entry.frame.slice_index, shear_px, entry.frame.height, interp);
        }
        let all = RowSpan { start: 0, end: self.canvas.height() };
        self.recompute(all);
        Ok(())
    }

    fn recompute(&mut self, band: RowSpan) {
        let width = self.canvas.width();
        let band = band.intersect(&RowSpan { start: 0, end: self.canvas.height() });
        let rows = band.start * width..band.end * width;
        self.canvas.image.pixels[rows.clone()].fill(0);
        self.contributor[rows].fill(NO_CONTRIBUTOR);

        for entry in self.ring.iter().flatten() {
            let overlap = entry.placement.span().intersect(&band);
            let slice = entry.frame.slice_index as u32;
            for row in overlap.start..overlap.end {
                entry.placement.fill_row(&entry.frame, row, &mut self.scratch);
                let base = row * width;
                let pixels = &mut self.canvas.image.pixels[base..base + width];
                let owners = &mut self.contributor[base..base + width];
                for ((p, o), &v) in pixels.iter_mut().zip(owners.iter_mut()).zip(&self.scratch) {
                    if v > *p {
                        *p = v;
                        *o = slice;
                    }
                }
            }
        }
    }

    /// Every nonzero pixel's contributor is a live ring entry whose placed
    /// value equals the pixel.
    pub fn check_provenance(&self) -> bool {
        let width = self.canvas.width();
        let mut scratch = vec![0u16; width];
        for row in 0..self.canvas.height() {
            for x in 0..width {
                let v = self.canvas.image.get(x, row);
                let owner = self.contributor[row * width + x];
                if v == 0 {
                    if owner != NO_CONTRIBUTOR {
                        return false;
                    }
                    continue;
                }
                let Some(Some(entry)) = self.ring.get(owner as usize) else {
                    return false;
                };
                let span = entry.placement.span();
                if row < span.start || row >= span.end {
                    return false;
                }
                entry.placement.fill_row(&entry.frame, row, &mut scratch);
                if scratch[x] != v {
                    return false;
                }
            }
        }
        true
    }
}
