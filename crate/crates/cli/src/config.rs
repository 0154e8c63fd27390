//! Run configuration: an optional TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use skewstream_core::pipeline::{Interpolation, UpdateMode};
use skewstream_core::source::{CameraTiming, CALIBRATED_READOUT_MS};
use skewstream_core::SheetGeometry;
use skewstream_server::PixelFormat;

/// Every section is optional; missing values fall back to flags, then to
/// built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub timing: TimingSection,
    #[serde(default)]
    pub view: ViewSection,
    #[serde(default)]
    pub layout: LayoutSection,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub server: ServerSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub alpha_deg: Option<f64>,
    pub scan_step_um: Option<f64>,
    pub pixel_pitch_um: Option<f64>,
    pub slice_count: Option<usize>,
    pub frame_width_px: Option<usize>,
    pub frame_height_px: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSection {
    pub exposure_ms: Option<f64>,
    pub readout_ms: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSection {
    pub angles_deg: Option<Vec<f64>>,
    pub out_pitch_um: Option<f64>,
    pub mode: Option<UpdateMode>,
    pub interp: Option<Interpolation>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSection {
    pub channels: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerSection {
    pub listen: Option<String>,
    pub transport: Option<String>,
    pub pixel_format: Option<PixelFormat>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// Geometry flags shared by the commands that synthesize data.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct GeometryArgs {
    /// Sheet angle to the scan axis, degrees.
    #[arg(long)]
    pub alpha_deg: Option<f64>,
    /// Scan step between slices, µm.
    #[arg(long)]
    pub scan_step_um: Option<f64>,
    /// Sample-space pixel pitch, µm.
    #[arg(long)]
    pub pixel_pitch_um: Option<f64>,
    /// Slices per stack.
    #[arg(long)]
    pub slices: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
}

impl GeometryArgs {
    /// Flags, then config, then a small default geometry.
    pub fn resolve(&self, file: &GeometrySection) -> Result<SheetGeometry> {
        let g = SheetGeometry::new(
            self.alpha_deg.or(file.alpha_deg).unwrap_or(30.0),
            self.scan_step_um.or(file.scan_step_um).unwrap_or(0.4),
            self.pixel_pitch_um.or(file.pixel_pitch_um).unwrap_or(0.115),
            self.slices.or(file.slice_count).unwrap_or(60),
            self.width.or(file.frame_width_px).unwrap_or(80),
            self.height.or(file.frame_height_px).unwrap_or(128),
        )?;
        Ok(g)
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct TimingArgs {
    #[arg(long)]
    pub exposure_ms: Option<f64>,
    #[arg(long)]
    pub readout_ms: Option<f64>,
}

impl TimingArgs {
    pub fn resolve(&self, file: &TimingSection) -> Result<CameraTiming> {
        Ok(CameraTiming::new(
            self.exposure_ms.or(file.exposure_ms).unwrap_or(0.1),
            self.readout_ms.or(file.readout_ms).unwrap_or(CALIBRATED_READOUT_MS),
        )?)
    }
}

/// Stable digest of any serializable configuration.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let canonical = serde_json::to_vec(config).expect("configs always serialize");
    format!("{:x}", Sha256::digest(canonical))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_config_parses() {
        let text = include_str!("../skewstream.example.toml");
        let cfg: FileConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.geometry.alpha_deg, Some(30.0));
        assert_eq!(cfg.view.mode, Some(UpdateMode::Global));
        assert_eq!(cfg.server.pixel_format, Some(PixelFormat::Gray16));
    }

    #[test]
    fn flags_win_over_the_file() {
        let file = GeometrySection { alpha_deg: Some(45.0), slice_count: Some(12), ..Default::default() };
        let args = GeometryArgs { alpha_deg: Some(35.0), ..Default::default() };
        let g = args.resolve(&file).unwrap();
        assert_eq!((g.alpha_deg, g.slice_count, g.frame_width_px), (35.0, 12, 80));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[geometry]\nalpha = 3\n").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = GeometrySection { alpha_deg: Some(30.0), ..Default::default() };
        let b = GeometrySection { alpha_deg: Some(31.0), ..Default::default() };
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
