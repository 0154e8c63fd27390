use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use skewstream_core::clock::{Clock, MonotonicClock};
use skewstream_core::pipeline::{ChannelLayout, LiveConfig, UpdateMode, ViewParams};
use skewstream_core::source::{open_stack, CameraTiming, FrameSource, SimulatedCamera};
use skewstream_core::SheetGeometry;
use skewstream_server::{bind, serve, start_live, PixelFormat, Transport, DEFAULT_CLIENT_QUEUE, DEFAULT_LISTEN};

use crate::bench::FormatArg;
use crate::config::{FileConfig, GeometryArgs, TimingArgs};
use crate::manifest::Manifest;
use crate::scenes::SceneArgs;

#[derive(Debug, clap::Args)]
pub struct LiveArgs {
    /// Address to serve on, host:port.
    #[arg(long, env = "SKEWSTREAM_LISTEN")]
    pub listen: Option<String>,
    #[arg(long, value_enum)]
    pub transport: Option<TransportArg>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Replay a recorded stack at camera speed instead of simulating.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub timing: TimingArgs,
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Channels side by side, each showing its own seeded scene.
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub rolling: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stop after this many seconds instead of waiting for Ctrl-C.
    #[arg(long)]
    pub duration_s: Option<f64>,
    /// Directory for the run manifest.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportArg {
    Websocket,
    Tcp,
}

#[derive(Debug, Serialize)]
struct LiveRun {
    listen: String,
    transport: TransportArg,
    pixel_format: PixelFormat,
    input: Option<PathBuf>,
    geometry: SheetGeometry,
    timing: CameraTiming,
    channels: usize,
    mode: UpdateMode,
    seed: u64,
}

pub fn run(args: &LiveArgs, file: &FileConfig) -> Result<()> {
    let seed = args.seed.or(file.seed).unwrap_or(7);
    let clock: Arc<dyn Clock> = Arc::new(MonotonicClock::new());
    let channels = args.channels.or(file.layout.channels).unwrap_or(1).max(1);
    let transport = match args.transport {
        Some(t) => t,
        None => match file.server.transport.as_deref() {
            None | Some("websocket") => TransportArg::Websocket,
            Some("tcp") => TransportArg::Tcp,
            Some(other) => bail!("unknown transport {other:?}; expected websocket or tcp"),
        },
    };

    let (source, geometry, timing): (Box<dyn FrameSource>, _, _) = match args.input.clone().or(file.paths.input.clone()) {
        Some(path) => {
            if channels > 1 {
                bail!("recorded stacks are replayed as a single channel");
            }
            let src = open_stack(&path, None)?.paced(clock.clone());
            let (g, t) = (src.metadata().geometry, src.metadata().timing);
            (Box::new(src), g, t)
        }
        None => {
            let g = args.geometry.resolve(&file.geometry)?;
            let t = args.timing.resolve(&file.timing)?;
            let scenes = (0..channels as u64)
                .map(|c| args.scene.build(&g, seed + c))
                .collect::<Result<Vec<_>>>()?;
            let layout = ChannelLayout::side_by_side(channels, g.frame_width_px, g.frame_height_px);
            let cam = SimulatedCamera::multi_channel(scenes, layout, g, t, clock.clone())?;
            (Box::new(cam), g, t)
        }
    };

    let mode = if args.rolling { UpdateMode::Rolling } else { file.view.mode.unwrap_or_default() };
    let mut params = ViewParams { mode, ..ViewParams::native(&geometry) };
    if let Some(i) = file.view.interp {
        params.interp = i;
    }
    if let Some(q) = file.view.out_pitch_um {
        params.out_pitch_um = q;
    }
    let run = LiveRun {
        listen: args
            .listen
            .clone()
            .or(file.server.listen.clone())
            .unwrap_or_else(|| DEFAULT_LISTEN.into()),
        transport,
        pixel_format: args.format.map(Into::into).or(file.server.pixel_format).unwrap_or_default(),
        input: args.input.clone().or(file.paths.input.clone()),
        geometry,
        timing,
        channels,
        mode,
        seed,
    };
    let out = args.out.clone().unwrap_or_else(|| "live".into());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Manifest::new("live", &run, Some(seed)).write(&out)?;

    let layout = ChannelLayout::side_by_side(channels, geometry.frame_width_px, geometry.frame_height_px);
    let session = start_live(source, clock, LiveConfig::new(layout, params), run.pixel_format, DEFAULT_CLIENT_QUEUE)?;
    let runtime = tokio::runtime::Runtime::new()?;
    let transport = match run.transport {
        TransportArg::Websocket => Transport::WebSocket,
        TransportArg::Tcp => Transport::Tcp,
    };
    let (hub, control) = (session.hub.clone(), session.control.clone());
    let telemetry = session.pipeline.telemetry().clone();
    let duration = args.duration_s;
    runtime.block_on(async move {
        let (listener, addr) = bind(&run.listen).await?;
        println!("serving {:?} on {addr}", run.transport);
        let reporter = tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(1));
            loop {
                tick.tick().await;
                let t = telemetry.snapshot();
                log::info!(
                    "{} frames, {:.1} fps, lag {:.1} ms, {} dropped",
                    t.emissions,
                    t.fps,
                    t.lag_ms,
                    t.drops
                );
            }
        });
        let stop = async move {
            match duration {
                Some(s) => tokio::time::sleep(Duration::from_secs_f64(s)).await,
                None => {
                    let _ = tokio::signal::ctrl_c().await;
                }
            }
        };
        let served = serve(listener, transport, hub, control, stop).await;
        reporter.abort();
        served
    })?;
    session.pipeline.stop()?;
    Ok(())
}
