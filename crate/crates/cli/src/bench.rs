use std::path::PathBuf;

use anyhow::{Context, Result};

use skewstream_core::bench::{render_table, run_bench, BenchConfig, CrossoverConfig};
use skewstream_core::pipeline::DisplayImage;
use skewstream_server::{encode_frame_packet, PixelFormat};

use crate::config::FileConfig;
use crate::manifest::Manifest;

#[derive(Debug, clap::Args)]
pub struct BenchArgs {
    /// Output directory for the JSON report, table and manifest.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Smaller sweeps for smoke testing; trends are noisier.
    #[arg(long)]
    pub quick: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Stacks measured per repeat.
    #[arg(long)]
    pub stacks: Option<usize>,
    /// Encoding used for the plotting stage.
    #[arg(long, value_enum, default_value_t = FormatArg::Gray8)]
    pub plot_format: FormatArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FormatArg {
    Gray16,
    Gray8,
}

impl From<FormatArg> for PixelFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Gray16 => PixelFormat::Gray16,
            FormatArg::Gray8 => PixelFormat::Gray8,
        }
    }
}

fn quick_config() -> BenchConfig {
    BenchConfig {
        frame_width_px: 128,
        exposures_ms: vec![0.1, 1.0, 5.0],
        slice_counts: vec![10, 20, 40],
        fovs_um: vec![250.0, 1000.0, 4000.0],
        stacks: 2,
        repeats: 1,
        crossover: CrossoverConfig { max_canvas_px: 4 << 20, ..CrossoverConfig::default() },
        ..BenchConfig::default()
    }
}

pub fn run(args: &BenchArgs, file: &FileConfig) -> Result<()> {
    let mut cfg = if args.quick { quick_config() } else { BenchConfig::default() };
    if let Some(seed) = args.seed.or(file.seed) {
        cfg.seed = seed;
    }
    if let Some(r) = args.repeats {
        cfg.repeats = r;
    }
    if let Some(s) = args.stacks {
        cfg.stacks = s;
    }
    let out = args.out.clone().or(file.paths.output.clone()).unwrap_or_else(|| "bench".into());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    // The plot stage is the real wire encoding a client would receive.
    let format = PixelFormat::from(args.plot_format);
    let encoder = move |d: &DisplayImage| encode_frame_packet(d, format, 0).map_or(0, |b| b.len());
    let report = run_bench(&cfg, &encoder)?;

    let table = render_table(&report);
    print!("{table}");
    std::fs::write(out.join("bench.txt"), &table)?;
    std::fs::write(out.join("bench.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Manifest::new("bench", &cfg, Some(cfg.seed)).write(&out)?;
    if !report.all_cells_agree() || !report.crossover_ordering_holds() {
        log::warn!("some measured dependencies differ from the expected table");
    }
    Ok(())
}
