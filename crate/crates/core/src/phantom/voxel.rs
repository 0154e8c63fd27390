use super::scene::{PhantomScene, Vec3};
use crate::{Error, Result};

/// Cell-centred 16-bit scalar field. Voxel `(ix, iy, iz)` sits at
/// `origin + (i + 0.5)·pitch` on each axis (`x`, scan `y`, height `h`).
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub voxel_pitch_um: f64,
    pub origin_um: Vec3,
    pub dims: [usize; 3],
    /// Indexed `ix + nx·(iy + ny·iz)`.
    pub intensities: Vec<u16>,
}

impl VoxelGrid {
    pub fn new(voxel_pitch_um: f64, origin_um: Vec3, dims: [usize; 3], intensities: Vec<u16>) -> Result<Self> {
        if !(voxel_pitch_um > 0.0) {
            return Err(Error::param("voxel pitch must be positive"));
        }
        if dims.contains(&0) {
            return Err(Error::param("voxel grid dimensions must be at least 1"));
        }
        if intensities.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::param("voxel data length does not match dimensions"));
        }
        Ok(Self { voxel_pitch_um, origin_um, dims, intensities })
    }

    /// Rasterizes the scene at voxel centres over its extent.
    pub fn from_scene(scene: &PhantomScene, voxel_pitch_um: f64) -> Result<Self> {
        if !(voxel_pitch_um > 0.0) {
            return Err(Error::param("voxel pitch must be positive"));
        }
        let size = scene.extent_um.size_um();
        let dims = size.map(|s| ((s / voxel_pitch_um).round() as usize).max(1));
        let origin = scene.extent_um.min_um;
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for iz in 0..dims[2] {
            for iy in 0..dims[1] {
                for ix in 0..dims[0] {
                    let p = [
                        origin[0] + (ix as f64 + 0.5) * voxel_pitch_um,
                        origin[1] + (iy as f64 + 0.5) * voxel_pitch_um,
                        origin[2] + (iz as f64 + 0.5) * voxel_pitch_um,
                    ];
                    data.push(scene.intensity_at(&p).round().clamp(0.0, 65535.0) as u16);
                }
            }
        }
        Self::new(voxel_pitch_um, origin, dims, data)
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> u16 {
        self.intensities[ix + self.dims[0] * (iy + self.dims[1] * iz)]
    }

    pub fn center_um(&self) -> Vec3 {
        [0, 1, 2].map(|k| self.origin_um[k] + 0.5 * self.dims[k] as f64 * self.voxel_pitch_um)
    }

    /// Trilinear interpolation at a sample-space point. Between the outermost
    /// voxel centres and the grid boundary the edge value is held; outside the
    /// grid the field is zero.
    pub fn sample(&self, p: &Vec3) -> f64 {
        let mut idx = [0usize; 3];
        let mut frac = [0f64; 3];
        for k in 0..3 {
            let f = (p[k] - self.origin_um[k]) / self.voxel_pitch_um - 0.5;
            if f < -0.5 || f > self.dims[k] as f64 - 0.5 {
                return 0.0;
            }
            let f = f.clamp(0.0, (self.dims[k] - 1) as f64);
            let i = (f.floor() as usize).min(self.dims[k].saturating_sub(2));
            idx[k] = i;
            frac[k] = f - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8usize {
            let mut weight = 1.0;
            let mut c = [0usize; 3];
            for k in 0..3 {
                let bit = (corner >> k) & 1;
                if self.dims[k] == 1 {
                    if bit == 1 {
                        weight = 0.0;
                    }
                    c[k] = 0;
                    continue;
                }
                c[k] = idx[k] + bit;
                weight *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if weight != 0.0 {
                acc += weight * f64::from(self.get(c[0], c[1], c[2]));
            }
        }
        acc
    }
}
