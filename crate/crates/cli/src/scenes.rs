use std::path::PathBuf;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skewstream_core::phantom::{Extent, PhantomScene, Primitive};
use skewstream_core::SheetGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenePreset {
    /// One sphere in the middle of the imaged volume.
    #[default]
    Sphere,
    /// Randomly placed spheres.
    Beads,
    /// A sphere plus a cylinder along the lateral axis.
    SphereCylinder,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct SceneArgs {
    /// Built-in scene, ignored when --scene-file is given.
    #[arg(long, value_enum, default_value_t = ScenePreset::Sphere)]
    pub scene: ScenePreset,
    /// Scene description in JSON.
    #[arg(long)]
    pub scene_file: Option<PathBuf>,
    /// Number of spheres for the beads preset.
    #[arg(long, default_value_t = 12)]
    pub beads: usize,
}

/// Sample-space box swept by one stack.
pub fn imaged_extent(geom: &SheetGeometry) -> Extent {
    let p = geom.pixel_pitch_um;
    let depth = geom.frame_height_px as f64 * p;
    let (sin_a, cos_a) = geom.alpha_rad().sin_cos();
    Extent {
        min_um: [0.0; 3],
        max_um: [
            geom.frame_width_px as f64 * p,
            (geom.slice_count - 1) as f64 * geom.scan_step_um + depth * cos_a,
            depth * sin_a,
        ],
    }
}

impl SceneArgs {
    pub fn build(&self, geom: &SheetGeometry, seed: u64) -> Result<PhantomScene> {
        if let Some(path) = &self.scene_file {
            return Ok(PhantomScene::load(path)?);
        }
        let extent = imaged_extent(geom);
        let size = extent.size_um();
        let c = extent.center_um();
        // Largest radius that fits the thinnest axis with a margin.
        let fit = 0.3 * size.iter().copied().fold(f64::INFINITY, f64::min);
        let primitives = match self.scene {
            ScenePreset::Sphere => vec![Primitive::Sphere { center_um: c, radius_um: fit, intensity: 4000 }],
            ScenePreset::SphereCylinder => vec![
                Primitive::Sphere { center_um: [c[0] - 0.2 * size[0], c[1] + 0.15 * size[1], c[2]], radius_um: fit, intensity: 3000 },
                Primitive::Cylinder {
                    center_um: [c[0], c[1] - 0.2 * size[1], c[2]],
                    radius_um: 0.6 * fit,
                    axis: [1.0, 0.0, 0.0],
                    intensity: 2000,
                },
            ],
            ScenePreset::Beads => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..self.beads)
                    .map(|_| {
                        let r = rng.gen_range(0.3..1.0) * fit.min(3.0);
                        let pick = |k: usize, rng: &mut ChaCha8Rng| {
                            let lo = extent.min_um[k] + r;
                            let hi = (extent.max_um[k] - r).max(lo + 1e-9);
                            rng.gen_range(lo..hi)
                        };
                        let center_um = [pick(0, &mut rng), pick(1, &mut rng), pick(2, &mut rng)];
                        Primitive::Sphere { center_um, radius_um: r, intensity: rng.gen_range(1000..4000) }
                    })
                    .collect()
            }
        };
        Ok(PhantomScene::new(extent, primitives)?.with_edge(geom.pixel_pitch_um))
    }
}
