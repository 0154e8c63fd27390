//! Synthetic scenes, the simulated camera's image former, and brute-force
//! oracles for the streaming path.

mod analysis;
mod oracle;
mod render;
mod scene;
mod voxel;

pub use analysis::{fit_axis_ratio, AxisFit};
pub use oracle::{oracle_project, reference_deskew, OracleProjection};
pub use render::{render_skewed_slice, render_skewed_slice_at, render_stack, sample_point};
pub use scene::{Extent, PhantomScene, Primitive, Vec3};
pub use voxel::VoxelGrid;
