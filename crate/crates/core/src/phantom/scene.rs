use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sample-space point `(x, y, h)` in µm.
pub type Vec3 = [f64; 3];

fn default_edge_um() -> f64 {
    1.0
}

fn default_point_radius_um() -> f64 {
    0.05
}

/// Axis-aligned bounding box in µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min_um: Vec3,
    pub max_um: Vec3,
}

impl Extent {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min_um[k] && p[k] <= self.max_um[k])
    }

    pub fn size_um(&self) -> Vec3 {
        [
            self.max_um[0] - self.min_um[0],
            self.max_um[1] - self.min_um[1],
            self.max_um[2] - self.min_um[2],
        ]
    }

    pub fn center_um(&self) -> Vec3 {
        [
            0.5 * (self.min_um[0] + self.max_um[0]),
            0.5 * (self.min_um[1] + self.max_um[1]),
            0.5 * (self.min_um[2] + self.max_um[2]),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Sphere {
        center_um: Vec3,
        radius_um: f64,
        intensity: u16,
    },
    /// Infinite cylinder through `center_um` along `axis`, clipped by the
    /// scene extent.
    Cylinder {
        center_um: Vec3,
        radius_um: f64,
        axis: Vec3,
        intensity: u16,
    },
    /// Hard-edged ball of `radius_um`, no soft edge.
    Point {
        center_um: Vec3,
        #[serde(default = "default_point_radius_um")]
        radius_um: f64,
        intensity: u16,
    },
}

impl Primitive {
    pub fn center_um(&self) -> &Vec3 {
        match self {
            Primitive::Sphere { center_um, .. }
            | Primitive::Cylinder { center_um, .. }
            | Primitive::Point { center_um, .. } => center_um,
        }
    }

    fn value_at(&self, p: &Vec3, edge_um: f64) -> f64 {
        match self {
            Primitive::Sphere { center_um, radius_um, intensity } => {
                let d = dist(p, center_um);
                f64::from(*intensity) * ramp(radius_um - d, edge_um)
            }
            Primitive::Cylinder { center_um, radius_um, axis, intensity } => {
                let d = dist_to_line(p, center_um, axis);
                f64::from(*intensity) * ramp(radius_um - d, edge_um)
            }
            Primitive::Point { center_um, radius_um, intensity } => {
                if dist(p, center_um) <= *radius_um {
                    f64::from(*intensity)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fraction of full intensity at signed distance `inside` from a surface.
/// Linear over `edge` µm centred on the surface; a hard step when `edge` is 0.
fn ramp(inside: f64, edge: f64) -> f64 {
    if edge <= 0.0 {
        return if inside >= 0.0 { 1.0 } else { 0.0 };
    }
    (0.5 + inside / edge).clamp(0.0, 1.0)
}

fn dist(a: &Vec3, b: &Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn dist_to_line(p: &Vec3, origin: &Vec3, axis: &Vec3) -> f64 {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let u = [axis[0] / norm, axis[1] / norm, axis[2] / norm];
    let v = [p[0] - origin[0], p[1] - origin[1], p[2] - origin[2]];
    let along = v[0] * u[0] + v[1] * u[1] + v[2] * u[2];
    let perp = [v[0] - along * u[0], v[1] - along * u[1], v[2] - along * u[2]];
    (perp[0] * perp[0] + perp[1] * perp[1] + perp[2] * perp[2]).sqrt()
}

/// Synthetic sample: a list of primitives composited by maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomScene {
    pub primitives: Vec<Primitive>,
    pub extent_um: Extent,
    /// Width of the linear intensity ramp at sphere and cylinder surfaces.
    #[serde(default = "default_edge_um")]
    pub edge_um: f64,
}

impl PhantomScene {
    pub fn new(extent_um: Extent, primitives: Vec<Primitive>) -> Result<Self> {
        let scene = Self { primitives, extent_um, edge_um: default_edge_um() };
        scene.validate()?;
        Ok(scene)
    }

    pub fn with_edge(mut self, edge_um: f64) -> Self {
        self.edge_um = edge_um;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.extent_um;
        if (0..3).any(|k| !(e.max_um[k] > e.min_um[k])) {
            return Err(Error::param("scene extent must have positive size on every axis"));
        }
        if !(self.edge_um >= 0.0) {
            return Err(Error::param("edge width must be non-negative"));
        }
        for (i, prim) in self.primitives.iter().enumerate() {
            if !e.contains(prim.center_um()) {
                return Err(Error::param(format!("primitive {i} lies outside the scene extent")));
            }
            match prim {
                Primitive::Cylinder { axis, radius_um, .. } => {
                    if axis.iter().all(|a| *a == 0.0) {
                        return Err(Error::param(format!("cylinder {i} has a zero axis")));
                    }
                    if !(*radius_um > 0.0) {
                        return Err(Error::param(format!("cylinder {i} radius must be positive")));
                    }
                }
                Primitive::Sphere { radius_um, .. } | Primitive::Point { radius_um, .. } => {
                    if !(*radius_um > 0.0) {
                        return Err(Error::param(format!("primitive {i} radius must be positive")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Scene intensity at a sample point; zero outside the extent.
    pub fn intensity_at(&self, p: &Vec3) -> f64 {
        if !self.extent_um.contains(p) {
            return 0.0;
        }
        self.primitives
            .iter()
            .map(|prim| prim.value_at(p, self.edge_um))
            .fold(0.0, f64::max)
    }

    pub fn translated(&self, offset_um: &Vec3) -> Self {
        let shift = |c: &Vec3| [c[0] + offset_um[0], c[1] + offset_um[1], c[2] + offset_um[2]];
        let primitives = self
            .primitives
            .iter()
            .map(|p| match p.clone() {
                Primitive::Sphere { center_um, radius_um, intensity } => {
                    Primitive::Sphere { center_um: shift(&center_um), radius_um, intensity }
                }
                Primitive::Cylinder { center_um, radius_um, axis, intensity } => {
                    Primitive::Cylinder { center_um: shift(&center_um), radius_um, axis, intensity }
                }
                Primitive::Point { center_um, radius_um, intensity } => {
                    Primitive::Point { center_um: shift(&center_um), radius_um, intensity }
                }
            })
            .collect();
        Self {
            primitives,
            extent_um: Extent {
                min_um: shift(&self.extent_um.min_um),
                max_um: shift(&self.extent_um.max_um),
            },
            edge_um: self.edge_um,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scene: Self = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn extent() -> Extent {
        Extent { min_um: [0.0; 3], max_um: [10.0; 3] }
    }

    #[test]
    fn json_schema_round_trip() {
        let text = r#"{
            "extent_um": {"min_um": [0,0,0], "max_um": [10,10,10]},
            "primitives": [
                {"kind": "sphere", "center_um": [5,5,5], "radius_um": 2, "intensity": 1000},
                {"kind": "cylinder", "center_um": [5,5,5], "radius_um": 1, "axis": [1,0,0], "intensity": 500},
                {"kind": "point", "center_um": [1,1,1], "intensity": 65535}
            ]
        }"#;
        let scene = PhantomScene::from_json(text).unwrap();
        assert_eq!(scene.edge_um, 1.0);
        assert_eq!(scene.primitives.len(), 3);
        let again = PhantomScene::from_json(&serde_json::to_string(&scene).unwrap()).unwrap();
        assert_eq!(again, scene);
    }

    #[test]
    fn intensity_over_16_bits_is_rejected() {
        let text = r#"{"extent_um": {"min_um": [0,0,0], "max_um": [1,1,1]},
            "primitives": [{"kind": "point", "center_um": [0.5,0.5,0.5], "intensity": 70000}]}"#;
        assert!(PhantomScene::from_json(text).is_err());
    }

    #[test]
    fn invalid_primitives_are_rejected() {
        let outside = Primitive::Sphere { center_um: [11.0, 5.0, 5.0], radius_um: 1.0, intensity: 1 };
        assert!(PhantomScene::new(extent(), vec![outside]).is_err());
        let flat = Primitive::Cylinder {
            center_um: [5.0; 3],
            radius_um: 1.0,
            axis: [0.0; 3],
            intensity: 1,
        };
        assert!(PhantomScene::new(extent(), vec![flat]).is_err());
    }

    #[test]
    fn soft_edge_is_half_intensity_at_surface() {
        let s = PhantomScene::new(
            extent(),
            vec![Primitive::Sphere { center_um: [5.0; 3], radius_um: 2.0, intensity: 1000 }],
        )
        .unwrap();
        assert_eq!(s.intensity_at(&[5.0, 5.0, 5.0]), 1000.0);
        assert!((s.intensity_at(&[7.0, 5.0, 5.0]) - 500.0).abs() < 1e-9);
        assert_eq!(s.intensity_at(&[8.0, 5.0, 5.0]), 0.0);
        assert_eq!(s.intensity_at(&[50.0, 5.0, 5.0]), 0.0);
    }
}
