use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

use skewstream_core::phantom::{render_stack, PhantomScene};
use skewstream_core::source::{sidecar_path, write_raw_stack, write_tiff_stack, CameraTiming, StackMetadata};
use skewstream_core::SheetGeometry;

use crate::config::{FileConfig, GeometryArgs, TimingArgs};
use crate::manifest::Manifest;
use crate::scenes::SceneArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StackFormat {
    Raw,
    Tiff,
}

#[derive(Debug, clap::Args)]
pub struct PhantomArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub timing: TimingArgs,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, value_enum, default_value_t = StackFormat::Raw)]
    pub format: StackFormat,
    /// Repeated sweeps of the same scene in one file.
    #[arg(long, default_value_t = 1)]
    pub sweeps: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct PhantomRun {
    geometry: SheetGeometry,
    timing: CameraTiming,
    scene: PhantomScene,
    format: StackFormat,
    sweeps: usize,
    seed: u64,
}

pub fn run(args: &PhantomArgs, file: &FileConfig) -> Result<()> {
    let geometry = args.geometry.resolve(&file.geometry)?;
    let timing = args.timing.resolve(&file.timing)?;
    let seed = args.seed.or(file.seed).unwrap_or(7);
    let scene = args.scene.build(&geometry, seed)?;
    let out = args.out.clone().or(file.paths.output.clone()).unwrap_or_else(|| "phantom".into());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let one = render_stack(&scene, &geometry)?;
    let mut frames = Vec::with_capacity(one.len() * args.sweeps.max(1));
    for sweep in 0..args.sweeps.max(1) as u64 {
        frames.extend(one.iter().map(|f| f.clone().with_indices(f.slice_index, sweep)));
    }
    let stack = out.join(match args.format {
        StackFormat::Raw => "stack.raw",
        StackFormat::Tiff => "stack.tif",
    });
    match args.format {
        StackFormat::Raw => write_raw_stack(&stack, &frames)?,
        StackFormat::Tiff => write_tiff_stack(&stack, &frames)?,
    }
    StackMetadata { geometry, timing }.save(sidecar_path(&stack))?;
    scene.save(out.join("scene.json"))?;

    let run = PhantomRun { geometry, timing, scene, format: args.format, sweeps: args.sweeps.max(1), seed };
    Manifest::new("phantom-gen", &run, Some(seed)).write(&out)?;
    println!("wrote {} frames to {}", frames.len(), stack.display());
    Ok(())
}
