//! Real-time deskewing engine for obliquely scanned lightsheet data.
//!
//! Raw camera slices are remapped into an enlarged canvas as they arrive,
//! folded into a running maximum-intensity projection, and resampled along
//! the shear axis to render arbitrary viewing angles (shear-warp). The
//! crate is organised bottom-up:
//!
//! - [`geometry`]: coordinate mathematics (per-slice shear, canvas extent,
//!   shear to view-angle mapping, warp factor).
//! - [`phantom`]: synthetic scenes, the skewed-slice image former used by the
//!   simulated camera, and brute-force oracles.
//! - [`source`]: camera timing, trigger schedules, galvo waveforms and frame
//!   sources (simulated or file-backed).
//! - [`pipeline`]: channel split, deskew/accumulate in global and rolling
//!   modes, warp, telemetry, bottleneck classification and the concurrent
//!   runtime.
//! - [`bench`]: parameter sweeps that measure per-stage cost.

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod clock;
pub mod error;
pub mod frame;
pub mod geometry;
pub mod image;
pub mod phantom;
pub mod pipeline;
pub mod source;

pub use error::{Error, Result};
pub use frame::RawFrame;
pub use geometry::{SheetGeometry, ViewTransform};
pub use image::Image16;
