use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::scene::{PhantomScene, Vec3};
use crate::{Error, RawFrame, Result, SheetGeometry};

/// Sample-space point imaged by pixel `(x, row)` of slice `slice_index`.
pub fn sample_point(geom: &SheetGeometry, slice_index: usize, x: usize, row: usize) -> Vec3 {
    let p = geom.pixel_pitch_um;
    let alpha = geom.alpha_rad();
    [
        x as f64 * p,
        slice_index as f64 * geom.scan_step_um + row as f64 * p * alpha.cos(),
        row as f64 * p * alpha.sin(),
    ]
}

/// Samples the scene on the tilted sheet of one slice.
pub fn render_skewed_slice(
    scene: &PhantomScene,
    geom: &SheetGeometry,
    slice_index: usize,
    noise_seed: Option<u64>,
) -> Result<RawFrame> {
    render_skewed_slice_at(scene, geom, slice_index, [0.0, 0.0], noise_seed)
}

/// Like [`render_skewed_slice`], with the sample stage displaced by
/// `stage_offset_um = (dx, dy)` in the lateral/scan plane.
pub fn render_skewed_slice_at(
    scene: &PhantomScene,
    geom: &SheetGeometry,
    slice_index: usize,
    stage_offset_um: [f64; 2],
    noise_seed: Option<u64>,
) -> Result<RawFrame> {
    if slice_index >= geom.slice_count {
        return Err(Error::SliceIndex { index: slice_index, count: geom.slice_count });
    }
    let (w, h) = (geom.frame_width_px, geom.frame_height_px);
    let mut rng = noise_seed.map(|seed| {
        ChaCha8Rng::seed_from_u64(seed ^ (slice_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    });
    let mut pixels = Vec::with_capacity(w * h);
    for row in 0..h {
        for x in 0..w {
            let mut pt = sample_point(geom, slice_index, x, row);
            pt[0] -= stage_offset_um[0];
            pt[1] -= stage_offset_um[1];
            let mean = scene.intensity_at(&pt);
            let value = match rng.as_mut() {
                Some(rng) if mean > 0.0 => Poisson::new(mean)
                    .map(|d| d.sample(rng))
                    .unwrap_or(mean),
                _ => mean,
            };
            pixels.push(value.round().clamp(0.0, 65535.0) as u16);
        }
    }
    Ok(RawFrame::new(w, h, pixels).with_indices(slice_index, 0))
}

/// All `N` slices of one sweep, noise-free.
pub fn render_stack(scene: &PhantomScene, geom: &SheetGeometry) -> Result<Vec<RawFrame>> {
    (0..geom.slice_count)
        .map(|i| render_skewed_slice(scene, geom, i, None))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{Extent, Primitive};

    fn extent() -> Extent {
        Extent { min_um: [0.0, 0.0, 0.0], max_um: [40.0, 80.0, 40.0] }
    }

    #[test]
    fn empty_scene_renders_zero_frame() {
        let scene = PhantomScene::new(extent(), vec![]).unwrap();
        let g = SheetGeometry::new(30.0, 1.0, 1.0, 5, 8, 8).unwrap();
        let f = render_skewed_slice(&scene, &g, 2, Some(7)).unwrap();
        assert!(f.pixels.iter().all(|&v| v == 0));
        assert_eq!(f.slice_index, 2);
    }

    #[test]
    fn out_of_range_slice_is_an_error() {
        let scene = PhantomScene::new(extent(), vec![]).unwrap();
        let g = SheetGeometry::new(30.0, 1.0, 1.0, 5, 8, 8).unwrap();
        assert!(matches!(
            render_skewed_slice(&scene, &g, 5, None),
            Err(Error::SliceIndex { index: 5, count: 5 })
        ));
    }

    #[test]
    fn point_source_lands_in_one_slice_at_predicted_pixel() {
        // alpha = 60, p = 1, step = 2: slice 3 pixel (x=4, row=5) images
        // (4, 3*2 + 5*0.5, 5*sin 60).
        let g = SheetGeometry::new(60.0, 2.0, 1.0, 8, 10, 10).unwrap();
        let target = [4.0, 6.0 + 2.5, 5.0 * 60f64.to_radians().sin()];
        let scene = PhantomScene::new(
            extent(),
            vec![Primitive::Point { center_um: target, radius_um: 0.05, intensity: 900 }],
        )
        .unwrap();
        for i in 0..g.slice_count {
            let f = render_skewed_slice(&scene, &g, i, None).unwrap();
            let lit: Vec<(usize, usize)> = (0..f.height)
                .flat_map(|r| (0..f.width).map(move |x| (x, r)))
                .filter(|&(x, r)| f.get(x, r) != 0)
                .collect();
            if i == 3 {
                assert_eq!(lit, vec![(4, 5)]);
                assert_eq!(f.get(4, 5), 900);
            } else {
                assert!(lit.is_empty(), "slice {i} lit at {lit:?}");
            }
        }
    }

    #[test]
    fn structure_normal_to_sheet_shifts_by_native_shear() {
        // alpha = 60, step = 4, p = 1 -> s0 = 2 rows exactly. A cylinder whose
        // axis is normal to the sheet is invariant across slices up to the shift.
        let g = SheetGeometry::new(60.0, 4.0, 1.0, 6, 4, 40).unwrap();
        let a = g.alpha_rad();
        let scene = PhantomScene::new(
            Extent { min_um: [-10.0, -100.0, -100.0], max_um: [50.0, 200.0, 200.0] },
            vec![Primitive::Cylinder {
                center_um: [2.0, 20.0, 10.0],
                radius_um: 4.0,
                axis: [0.0, a.sin(), -a.cos()],
                intensity: 1000,
            }],
        )
        .unwrap()
        .with_edge(2.0);
        let frames = render_stack(&scene, &g).unwrap();
        let s0 = g.native_shear_px().round() as usize;
        assert_eq!(s0, 2);
        for pair in frames.windows(2) {
            let (prev, next) = (&pair[0], &pair[1]);
            for row in 0..g.frame_height_px - s0 {
                assert_eq!(next.row(row), prev.row(row + s0));
            }
        }
        assert!(frames[0].pixels.iter().any(|&v| v > 0));
    }

    #[test]
    fn cylinder_along_invariant_axis_is_constant_across_columns() {
        let g = SheetGeometry::new(45.0, 1.0, 1.0, 10, 12, 20).unwrap();
        let scene = PhantomScene::new(
            extent(),
            vec![Primitive::Cylinder {
                center_um: [6.0, 10.0, 6.0],
                radius_um: 3.0,
                axis: [1.0, 0.0, 0.0],
                intensity: 500,
            }],
        )
        .unwrap();
        let mut lit = 0;
        for frame in render_stack(&scene, &g).unwrap() {
            for row in 0..frame.height {
                let r = frame.row(row);
                assert!(r.iter().all(|&v| v == r[0]));
                lit += usize::from(r[0] > 0);
            }
        }
        assert!(lit > 0);
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let scene = PhantomScene::new(
            extent(),
            vec![Primitive::Sphere { center_um: [4.0, 8.0, 4.0], radius_um: 6.0, intensity: 200 }],
        )
        .unwrap();
        let g = SheetGeometry::new(30.0, 1.0, 1.0, 4, 8, 8).unwrap();
        let a = render_skewed_slice(&scene, &g, 1, Some(11)).unwrap();
        let b = render_skewed_slice(&scene, &g, 1, Some(11)).unwrap();
        let c = render_skewed_slice(&scene, &g, 1, Some(12)).unwrap();
        let clean = render_skewed_slice(&scene, &g, 1, None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, clean);
    }
}
