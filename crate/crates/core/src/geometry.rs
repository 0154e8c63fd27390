//! Coordinate mathematics for obliquely scanned stacks.
//!
//! Conventions used throughout the crate:
//!
//! - Sample space is `(x, y, h)`: `x` is the camera's invariant lateral axis,
//!   `y` the scan axis and `h` the height above the coverslip.
//! - A raw frame is `W` columns (`x`) by `H` rows (`j`, along the sheet).
//!   Pixel `(x, j)` of slice `i` images the sample point
//!   `(x·p, i·Δ + j·p·cos α, j·p·sin α)`.
//! - The deskew canvas keeps the `x` axis and grows the row axis to
//!   `U = H + ceil((N − 1)·s)`; slice `i` lands at row offset `i·s`, so canvas
//!   row `u = j + i·s`.
//!
//! Angles are degrees at every public boundary and radians internally.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default ceiling on canvas pixel count (`X·U`).
pub const DEFAULT_CANVAS_LIMIT: usize = 1 << 28;

/// Offsets within this distance of an integer are treated as integral, so
/// that `(N − 1)·s` computed from a rational shear does not grow the canvas by
/// a spurious row.
const SNAP_EPS: f64 = 1e-9;

/// Acquisition geometry of one oblique stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SheetGeometry {
    /// Sheet angle to the scan axis, degrees, strictly between 0 and 90.
    pub alpha_deg: f64,
    /// Distance between consecutive slices along the scan axis, µm.
    pub scan_step_um: f64,
    /// Sample-space pixel pitch along the sheet (and lateral) axis, µm.
    pub pixel_pitch_um: f64,
    /// Images per stack.
    pub slice_count: usize,
    /// Length of the invariant lateral axis, pixels.
    pub frame_width_px: usize,
    /// Length of the sheet-depth axis, pixels.
    pub frame_height_px: usize,
}

impl SheetGeometry {
    pub fn new(
        alpha_deg: f64,
        scan_step_um: f64,
        pixel_pitch_um: f64,
        slice_count: usize,
        frame_width_px: usize,
        frame_height_px: usize,
    ) -> Result<Self> {
        let geom = Self {
            alpha_deg,
            scan_step_um,
            pixel_pitch_um,
            slice_count,
            frame_width_px,
            frame_height_px,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_deg > 0.0 && self.alpha_deg < 90.0) {
            return Err(Error::param(format!(
                "sheet angle must lie in (0, 90) degrees, got {}",
                self.alpha_deg
            )));
        }
        if !(self.scan_step_um > 0.0 && self.scan_step_um.is_finite()) {
            return Err(Error::param(format!(
                "scan step must be positive, got {}",
                self.scan_step_um
            )));
        }
        if !(self.pixel_pitch_um > 0.0 && self.pixel_pitch_um.is_finite()) {
            return Err(Error::param(format!(
                "pixel pitch must be positive, got {}",
                self.pixel_pitch_um
            )));
        }
        if self.slice_count == 0 || self.frame_width_px == 0 || self.frame_height_px == 0 {
            return Err(Error::param(format!(
                "slice count and frame dimensions must be at least 1, got N={} W={} H={}",
                self.slice_count, self.frame_width_px, self.frame_height_px
            )));
        }
        Ok(())
    }

    pub fn alpha_rad(&self) -> f64 {
        self.alpha_deg.to_radians()
    }

    /// Native per-slice shear `s₀` in canvas rows.
    pub fn native_shear_px(&self) -> f64 {
        native_shear_px(self)
    }

    /// Upper bound on user-selectable shear (`2·s₀`).
    pub fn max_shear_px(&self) -> f64 {
        2.0 * self.native_shear_px()
    }
}

/// Lateral offset between consecutive slices, `l = z·cos α`, in µm.
pub fn shear_factor(scan_step_um: f64, alpha_deg: f64) -> Result<f64> {
    if !(scan_step_um >= 0.0) || !scan_step_um.is_finite() {
        return Err(Error::param(format!(
            "scan step must be non-negative, got {scan_step_um}"
        )));
    }
    if !(0.0..=90.0).contains(&alpha_deg) {
        return Err(Error::param(format!(
            "sheet angle must lie in [0, 90] degrees, got {alpha_deg}"
        )));
    }
    // cos(90°) is not exactly zero in floating point.
    if alpha_deg == 90.0 {
        return Ok(0.0);
    }
    Ok(scan_step_um * alpha_deg.to_radians().cos())
}

/// Per-slice shear in pixels for an explicit step/angle/pitch triple.
pub fn shear_px_for(scan_step_um: f64, alpha_deg: f64, pixel_pitch_um: f64) -> Result<f64> {
    if !(pixel_pitch_um > 0.0) {
        return Err(Error::param(format!(
            "pixel pitch must be positive, got {pixel_pitch_um}"
        )));
    }
    Ok(shear_factor(scan_step_um, alpha_deg)? / pixel_pitch_um)
}

/// Native per-slice shear `s₀ = Δ·cos α / p`. May be fractional.
pub fn native_shear_px(geom: &SheetGeometry) -> f64 {
    geom.scan_step_um * geom.alpha_rad().cos() / geom.pixel_pitch_um
}

/// Splits a fractional row offset into an integral base row and a fraction in
/// `[0, 1)`, snapping values within `SNAP_EPS` of an integer.
pub fn split_offset(offset: f64) -> (usize, f64) {
    debug_assert!(offset >= 0.0);
    let nearest = offset.round();
    if (offset - nearest).abs() <= SNAP_EPS * nearest.max(1.0) {
        return (nearest as usize, 0.0);
    }
    let base = offset.floor();
    (base as usize, offset - base)
}

/// Number of extra canvas rows needed to hold `slices` slices at `shear_px`.
pub fn canvas_growth_rows(slices: usize, shear_px: f64) -> usize {
    if slices <= 1 {
        return 0;
    }
    let (base, frac) = split_offset((slices - 1) as f64 * shear_px);
    if frac > 0.0 {
        base + 1
    } else {
        base
    }
}

/// Canvas width and height `(X, U)` for the given shear, checked against
/// [`DEFAULT_CANVAS_LIMIT`].
pub fn output_extent(geom: &SheetGeometry, shear_px: f64) -> Result<(usize, usize)> {
    output_extent_with_limit(geom, shear_px, DEFAULT_CANVAS_LIMIT)
}

pub fn output_extent_with_limit(
    geom: &SheetGeometry,
    shear_px: f64,
    max_pixels: usize,
) -> Result<(usize, usize)> {
    if !(shear_px >= 0.0) || !shear_px.is_finite() {
        return Err(Error::param(format!(
            "shear must be finite and non-negative, got {shear_px}"
        )));
    }
    let growth = (geom.slice_count.saturating_sub(1)) as f64 * shear_px;
    if growth > max_pixels as f64 {
        return Err(Error::Capacity(format!(
            "shear {shear_px} px over {} slices exceeds the canvas limit",
            geom.slice_count
        )));
    }
    let width = geom.frame_width_px;
    let height = geom.frame_height_px + canvas_growth_rows(geom.slice_count, shear_px);
    match width.checked_mul(height) {
        Some(px) if px <= max_pixels => Ok((width, height)),
        _ => Err(Error::Capacity(format!(
            "canvas {width}x{height} exceeds the limit of {max_pixels} pixels"
        ))),
    }
}

/// Projection angle from the horizontal produced by deskewing at `shear_px`.
///
/// Rows of constant canvas coordinate collapse sample points along the ray
/// `(Δ − s·p·cos α, −s·p·sin α)` in `(y, h)`, hence
/// `θ = atan2(s·p·sin α, Δ − s·p·cos α)`.
pub fn view_angle_from_shear(shear_px: f64, geom: &SheetGeometry) -> f64 {
    let alpha = geom.alpha_rad();
    let along = shear_px * geom.pixel_pitch_um;
    (along * alpha.sin())
        .atan2(geom.scan_step_um - along * alpha.cos())
        .to_degrees()
}

/// Inverse of [`view_angle_from_shear`]: `s = Δ·sin θ / (p·sin(α + θ))`.
///
/// Valid for `0 ≤ θ < 180 − α`; larger angles have no finite shear.
pub fn shear_from_view_angle(view_angle_deg: f64, geom: &SheetGeometry) -> Result<f64> {
    let limit = 180.0 - geom.alpha_deg;
    if !(0.0..limit).contains(&view_angle_deg) {
        return Err(Error::param(format!(
            "view angle must lie in [0, {limit}) degrees, got {view_angle_deg}"
        )));
    }
    let theta = view_angle_deg.to_radians();
    let denom = geom.pixel_pitch_um * (geom.alpha_rad() + theta).sin();
    Ok(geom.scan_step_um * theta.sin() / denom)
}

/// 1-D rescale along the shear axis that turns the projection at `shear_px`
/// into an orthographic view sampled at `out_pitch_um`.
///
/// Equals `Δ·sin θ / (s·q)`; written as
/// `Δ·p·sin α / (q·|ray|)` so the `s → 0` limit needs no special case.
pub fn warp_factor(shear_px: f64, geom: &SheetGeometry, out_pitch_um: f64) -> Result<f64> {
    if !(shear_px >= 0.0) {
        return Err(Error::param(format!("shear must be non-negative, got {shear_px}")));
    }
    if !(out_pitch_um > 0.0) {
        return Err(Error::param(format!(
            "output pitch must be positive, got {out_pitch_um}"
        )));
    }
    let alpha = geom.alpha_rad();
    let p = geom.pixel_pitch_um;
    let along = shear_px * p;
    let ray = (along * alpha.sin()).hypot(geom.scan_step_um - along * alpha.cos());
    Ok(geom.scan_step_um * p * alpha.sin() / (out_pitch_um * ray))
}

/// Physical size of a `width_px × height_px` image, µm.
pub fn physical_extent_um(width_px: usize, height_px: usize, pitch_um: f64) -> (f64, f64) {
    (width_px as f64 * pitch_um, height_px as f64 * pitch_um)
}

/// Shear-warp parameters for one rendered view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewTransform {
    pub shear_px: f64,
    pub warp_scale: f64,
    pub view_angle_deg: f64,
    pub out_pitch_um: f64,
}

impl ViewTransform {
    pub fn from_shear(geom: &SheetGeometry, shear_px: f64, out_pitch_um: f64) -> Result<Self> {
        Ok(Self {
            shear_px,
            warp_scale: warp_factor(shear_px, geom, out_pitch_um)?,
            view_angle_deg: view_angle_from_shear(shear_px, geom),
            out_pitch_um,
        })
    }

    pub fn from_view_angle(geom: &SheetGeometry, view_angle_deg: f64, out_pitch_um: f64) -> Result<Self> {
        let shear = shear_from_view_angle(view_angle_deg, geom)?;
        Self::from_shear(geom, shear, out_pitch_um)
    }

    /// Native deskew view: `s = s₀`, display pitch equal to the pixel pitch.
    pub fn native(geom: &SheetGeometry) -> Self {
        Self::from_shear(geom, geom.native_shear_px(), geom.pixel_pitch_um)
            .expect("valid geometry always yields a native view")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom(alpha: f64, step: f64, pitch: f64) -> SheetGeometry {
        SheetGeometry::new(alpha, step, pitch, 10, 8, 8).unwrap()
    }

    #[test]
    fn shear_factor_analytic_cases() {
        assert_eq!(shear_factor(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(shear_factor(1.0, 90.0).unwrap(), 0.0);
        assert!((shear_factor(2.0, 60.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn shear_factor_rejects_bad_input() {
        assert!(matches!(shear_factor(-1.0, 30.0), Err(Error::Parameter(_))));
        assert!(matches!(shear_factor(1.0, 90.5), Err(Error::Parameter(_))));
        assert!(matches!(shear_factor(1.0, -0.1), Err(Error::Parameter(_))));
    }

    #[test]
    fn native_shear_examples() {
        let g = geom(60.0, 0.115, 0.115);
        assert!((g.native_shear_px() - 0.5).abs() < 1e-12);
        assert_eq!(shear_px_for(0.0, 37.0, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn output_extent_examples() {
        let single = SheetGeometry::new(45.0, 1.0, 1.0, 1, 4, 4).unwrap();
        assert_eq!(output_extent(&single, 123.4).unwrap(), (4, 4));
        let three = SheetGeometry::new(45.0, 1.0, 1.0, 3, 4, 4).unwrap();
        assert_eq!(output_extent(&three, 2.0).unwrap(), (4, 8));
    }

    #[test]
    fn reported_display_size_is_reproduced() {
        let g = SheetGeometry::new(60.0, 1.0, 0.115, 50, 1304, 87).unwrap();
        let implied: f64 = (3652.0 - 87.0) / 49.0;
        assert!((implied - 72.76).abs() < 0.01);
        assert_eq!(output_extent(&g, implied).unwrap(), (1304, 3652));
        let (x_um, y_um) = physical_extent_um(3652, 1304, 0.115);
        assert!((x_um - 420.0).abs() < 0.1 && (y_um - 150.0).abs() < 0.1);
    }

    #[test]
    fn output_extent_capacity_error() {
        let g = SheetGeometry::new(45.0, 1.0, 1.0, 100, 100, 100).unwrap();
        assert!(matches!(
            output_extent_with_limit(&g, 50.0, 100 * 1000),
            Err(Error::Capacity(_))
        ));
        assert!(matches!(output_extent(&g, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn view_angle_examples() {
        let g = geom(30.0, 0.4, 0.115);
        assert_eq!(view_angle_from_shear(0.0, &g), 0.0);
        assert!((view_angle_from_shear(g.native_shear_px(), &g) - 60.0).abs() < 1e-9);
        let g45 = geom(45.0, 0.2, 0.2);
        let s0 = 45f64.to_radians().cos();
        assert!((view_angle_from_shear(s0, &g45) - 45.0).abs() < 1e-9);
    }

    #[test]
    fn warp_examples() {
        let g = geom(30.0, 0.3, 0.115);
        let w = warp_factor(g.native_shear_px(), &g, g.pixel_pitch_um).unwrap();
        assert!((w - 1.0).abs() < 1e-12);
        // Near-vertical sheet: the side view is already isometric.
        let steep = geom(89.999_999, 1.0, 1.0);
        assert!((warp_factor(0.0, &steep, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(warp_factor(1.0, &g, 0.0).is_err());
    }

    #[test]
    fn warp_continuous_at_zero_shear() {
        for alpha in [5.0, 30.0, 60.0, 85.0] {
            let g = geom(alpha, 0.5, 0.1);
            let w0 = warp_factor(0.0, &g, 0.1).unwrap();
            let we = warp_factor(1e-6, &g, 0.1).unwrap();
            assert!((w0 - we).abs() < 1e-6, "alpha {alpha}: {w0} vs {we}");
            assert!((w0 - alpha.to_radians().sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_round_trips() {
        let g = geom(35.0, 0.4, 0.115);
        for theta in [0.0, 10.0, 55.0, 90.0, 120.0] {
            let s = shear_from_view_angle(theta, &g).unwrap();
            assert!((view_angle_from_shear(s, &g) - theta).abs() < 1e-9);
        }
        assert!(shear_from_view_angle(145.0, &g).is_err());
    }

    #[test]
    fn invalid_geometry_rejected() {
        assert!(SheetGeometry::new(0.0, 1.0, 1.0, 1, 1, 1).is_err());
        assert!(SheetGeometry::new(90.0, 1.0, 1.0, 1, 1, 1).is_err());
        assert!(SheetGeometry::new(45.0, 0.0, 1.0, 1, 1, 1).is_err());
        assert!(SheetGeometry::new(45.0, 1.0, 1.0, 0, 1, 1).is_err());
    }

    proptest! {
        #[test]
        fn view_angle_monotone_up_to_native(
            alpha in 1.0f64..89.0, step in 0.01f64..5.0, pitch in 0.05f64..2.0,
            a in 0.0f64..1.0, b in 0.0f64..1.0,
        ) {
            let g = geom(alpha, step, pitch);
            let s0 = g.native_shear_px();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-6);
            prop_assert!(view_angle_from_shear(lo * s0, &g) < view_angle_from_shear(hi * s0, &g));
        }

        #[test]
        fn extent_grows_by_one_shear_step(n in 1usize..200, shear in 0usize..50, h in 1usize..64) {
            let a = SheetGeometry::new(40.0, 1.0, 1.0, n, 3, h).unwrap();
            let b = SheetGeometry { slice_count: n + 1, ..a };
            let (_, ua) = output_extent(&a, shear as f64).unwrap();
            let (_, ub) = output_extent(&b, shear as f64).unwrap();
            prop_assert_eq!(ub - ua, shear);
        }
    }
}
