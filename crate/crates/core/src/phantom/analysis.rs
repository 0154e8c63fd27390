use crate::{Error, Image16, Result};

/// Shape of the bright blob in an image, from second moments of the region
/// above a fraction of the peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisFit {
    /// Major over minor axis length; 1 for a disc.
    pub ratio: f64,
    pub major_px: f64,
    pub minor_px: f64,
    /// Radius of a disc with the same area.
    pub equivalent_radius_px: f64,
    pub centroid: (f64, f64),
}

pub fn fit_axis_ratio(image: &Image16, threshold_frac: f64) -> Result<AxisFit> {
    let peak = image.max_value();
    if peak == 0 {
        return Err(Error::param("cannot fit axes of an empty image"));
    }
    let cutoff = f64::from(peak) * threshold_frac;
    let (mut n, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for row in 0..image.height {
        for x in 0..image.width {
            if f64::from(image.get(x, row)) >= cutoff {
                n += 1.0;
                sx += x as f64;
                sy += row as f64;
            }
        }
    }
    let (cx, cy) = (sx / n, sy / n);
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for row in 0..image.height {
        for x in 0..image.width {
            if f64::from(image.get(x, row)) >= cutoff {
                let (dx, dy) = (x as f64 - cx, row as f64 - cy);
                cxx += dx * dx;
                cyy += dy * dy;
                cxy += dx * dy;
            }
        }
    }
    // Include the pixel's own extent (uniform square, variance 1/12).
    cxx = cxx / n + 1.0 / 12.0;
    cyy = cyy / n + 1.0 / 12.0;
    cxy /= n;
    let mean = 0.5 * (cxx + cyy);
    let diff = (0.25 * (cxx - cyy).powi(2) + cxy * cxy).sqrt();
    let (l1, l2) = (mean + diff, (mean - diff).max(f64::MIN_POSITIVE));
    // A uniform ellipse with semi-axis a has variance a²/4 along that axis.
    let (major, minor) = (2.0 * l1.sqrt(), 2.0 * l2.sqrt());
    Ok(AxisFit {
        ratio: major / minor,
        major_px: major,
        minor_px: minor,
        equivalent_radius_px: (n / std::f64::consts::PI).sqrt(),
        centroid: (cx, cy),
    })
}
