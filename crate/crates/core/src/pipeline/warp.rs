use serde::{Deserialize, Serialize};

use super::canvas::UpdateMode;
use super::telemetry::StageTimings;
use crate::{Error, Image16, Result, ViewTransform};

/// A rendered view ready for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayImage {
    pub image: Image16,
    pub channel_id: u16,
    pub sweep_index: u64,
    pub slice_index: usize,
    pub view_angle_deg: f64,
    pub shear_px: f64,
    pub out_pitch_um: f64,
    pub mode: UpdateMode,
    /// False for interrupted stacks and partially filled rolling rings.
    pub complete: bool,
    pub timings: StageTimings,
    pub emitted_ns: u64,
}

/// Resamples rows (the shear axis) by `warp_scale` with linear
/// interpolation. Output row `r` reads source position `(r + ½)/w − ½`.
pub fn warp_rows(projection: &Image16, warp_scale: f64) -> Result<Image16> {
    if !(warp_scale > 0.0 && warp_scale.is_finite()) {
        return Err(Error::param(format!("warp scale must be positive, got {warp_scale}")));
    }
    let rows = (projection.height as f64 * warp_scale).round() as usize;
    if rows == 0 || projection.width == 0 {
        return Err(Error::param(format!(
            "warp scale {warp_scale} collapses {} rows to nothing",
            projection.height
        )));
    }
    if warp_scale == 1.0 {
        return Ok(projection.clone());
    }
    let last = (projection.height - 1) as f64;
    let w = projection.width;
    let mut out = Vec::with_capacity(rows * w);
    for r in 0..rows {
        let src = ((r as f64 + 0.5) / warp_scale - 0.5).clamp(0.0, last);
        let j0 = src.floor() as usize;
        let j1 = (j0 + 1).min(projection.height - 1);
        let f = src - j0 as f64;
        let (a, b) = (projection.row(j0), projection.row(j1));
        out.extend(
            a.iter()
                .zip(b)
                .map(|(&p, &q)| ((1.0 - f) * f64::from(p) + f * f64::from(q) + 0.5).floor() as u16),
        );
    }
    Ok(Image16::new(w, rows, out))
}

/// Applies the view's warp and tags the result.
pub fn warp_and_emit(
    projection: &Image16,
    view: &ViewTransform,
    tags: EmitTags,
) -> Result<DisplayImage> {
    Ok(DisplayImage {
        image: warp_rows(projection, view.warp_scale)?,
        channel_id: tags.channel_id,
        sweep_index: tags.sweep_index,
        slice_index: tags.slice_index,
        view_angle_deg: view.view_angle_deg,
        shear_px: view.shear_px,
        out_pitch_um: view.out_pitch_um,
        mode: tags.mode,
        complete: tags.complete,
        timings: tags.timings,
        emitted_ns: tags.emitted_ns,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EmitTags {
    pub channel_id: u16,
    pub sweep_index: u64,
    pub slice_index: usize,
    pub mode: UpdateMode,
    pub complete: bool,
    pub timings: StageTimings,
    pub emitted_ns: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_scale_is_identity() {
        let img = Image16::new(2, 3, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(warp_rows(&img, 1.0).unwrap(), img);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Image16::new(3, 4, vec![77; 12]);
        let half = warp_rows(&img, 0.5).unwrap();
        assert_eq!((half.width, half.height), (3, 2));
        assert!(half.pixels.iter().all(|&v| v == 77));
        let up = warp_rows(&img, 1.75).unwrap();
        assert_eq!(up.height, 7);
        assert!(up.pixels.iter().all(|&v| v == 77));
    }

    #[test]
    fn ramp_is_resampled_linearly() {
        let img = Image16::new(1, 4, vec![0, 100, 200, 300]);
        let up = warp_rows(&img, 2.0).unwrap();
        // Source positions -0.25, 0.25, 0.75, ..., 3.25 (clamped at the ends).
        assert_eq!(up.pixels, vec![0, 25, 75, 125, 175, 225, 275, 300]);
    }

    #[test]
    fn degenerate_scale_rejected() {
        let img = Image16::new(1, 4, vec![0; 4]);
        assert!(warp_rows(&img, 0.1).is_err());
        assert!(warp_rows(&img, 0.0).is_err());
        assert!(warp_rows(&img, f64::NAN).is_err());
    }
}
