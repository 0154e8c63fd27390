use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use skewstream_core::pipeline::{warp_rows, GlobalAccumulator, Interpolation};
use skewstream_core::source::open_stack;
use skewstream_core::{SheetGeometry, ViewTransform};

use crate::config::FileConfig;
use crate::manifest::Manifest;

#[derive(Debug, clap::Args)]
pub struct DeskewArgs {
    /// Stack file or directory; geometry comes from its JSON sidecar.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// View angles in degrees, comma separated. Defaults to the native view.
    #[arg(long, value_delimiter = ',')]
    pub angles: Option<Vec<f64>>,
    /// Display pitch, µm. Defaults to the pixel pitch.
    #[arg(long)]
    pub out_pitch_um: Option<f64>,
    #[arg(long, value_enum)]
    pub interp: Option<InterpArg>,
    /// Which sweep of the file to project.
    #[arg(long, default_value_t = 0)]
    pub sweep: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InterpArg {
    Nearest,
    Linear,
}

impl From<InterpArg> for Interpolation {
    fn from(a: InterpArg) -> Self {
        match a {
            InterpArg::Nearest => Interpolation::Nearest,
            InterpArg::Linear => Interpolation::Linear,
        }
    }
}

#[derive(Debug, Serialize)]
struct DeskewRun {
    input: PathBuf,
    geometry: SheetGeometry,
    angles_deg: Vec<f64>,
    out_pitch_um: f64,
    interp: Interpolation,
    sweep: u64,
}

#[derive(Debug, Serialize)]
struct ViewRecord {
    view_angle_deg: f64,
    shear_px: f64,
    warp_scale: f64,
    out_pitch_um: f64,
    width_px: usize,
    height_px: usize,
    /// Physical width and height, µm.
    extent_um: [f64; 2],
    png: String,
    raw: String,
}

#[derive(Debug, Serialize)]
struct DeskewMetadata<'a> {
    geometry: &'a SheetGeometry,
    sweep: u64,
    interp: Interpolation,
    views: Vec<ViewRecord>,
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn run(args: &DeskewArgs, file: &FileConfig) -> Result<()> {
    let Some(input) = args.input.clone().or(file.paths.input.clone()) else {
        bail!("no input stack: pass --input or set paths.input");
    };
    let out = args.out.clone().or(file.paths.output.clone()).unwrap_or_else(|| "out".into());
    let mut source = open_stack(&input, None)?;
    let geometry = source.metadata().geometry;
    let run = DeskewRun {
        input: input.clone(),
        geometry,
        angles_deg: args
            .angles
            .clone()
            .or(file.view.angles_deg.clone())
            .unwrap_or_else(|| vec![90.0 - geometry.alpha_deg]),
        out_pitch_um: args.out_pitch_um.or(file.view.out_pitch_um).unwrap_or(geometry.pixel_pitch_um),
        interp: args.interp.map(Into::into).or(file.view.interp).unwrap_or_default(),
        sweep: args.sweep,
    };

    let frames: Vec<_> = source.read_all()?.into_iter().filter(|f| f.sweep_index == run.sweep).collect();
    if frames.len() != geometry.slice_count {
        bail!(
            "sweep {} of {} has {} of {} slices",
            run.sweep,
            input.display(),
            frames.len(),
            geometry.slice_count
        );
    }
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let mut views = Vec::new();
    for &angle in &run.angles_deg {
        let view = ViewTransform::from_view_angle(&geometry, angle, run.out_pitch_um)?;
        let mut acc = GlobalAccumulator::new(geometry, view.shear_px, run.interp)?;
        for f in &frames {
            acc.place(f)?;
        }
        let image = warp_rows(&acc.finalize()?, view.warp_scale)?;
        let stem = format!("view_{angle:06.2}deg");
        let (png, raw) = (out.join(format!("{stem}.png")), out.join(format!("{stem}.raw")));
        image.write_png(&png)?;
        image.write_raw(&raw)?;
        views.push(ViewRecord {
            view_angle_deg: view.view_angle_deg,
            shear_px: view.shear_px,
            warp_scale: view.warp_scale,
            out_pitch_um: view.out_pitch_um,
            width_px: image.width,
            height_px: image.height,
            extent_um: [image.width as f64 * view.out_pitch_um, image.height as f64 * view.out_pitch_um],
            png: file_name(&png),
            raw: file_name(&raw),
        });
        println!("{angle:>7.2} deg -> {} ({}x{})", png.display(), image.width, image.height);
    }

    let meta = DeskewMetadata { geometry: &geometry, sweep: run.sweep, interp: run.interp, views };
    let path = out.join("deskew.json");
    std::fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Manifest::new("deskew", &run, None).write(&out)?;
    Ok(())
}
