//! Recorded stacks: raw little-endian 16-bit with a JSON sidecar, or
//! multi-page 16-bit grayscale TIFF.
//!
//! Raw layout: frames concatenated, each `height` rows of `width` pixels,
//! every pixel a little-endian `u16`. The sidecar carries geometry and
//! timing:
//!
//! ```json
//! {
//!   "geometry": {"alpha_deg": 30.0, "scan_step_um": 0.4, "pixel_pitch_um": 0.115,
//!                "slice_count": 50, "frame_width_px": 1304, "frame_height_px": 87},
//!   "timing": {"exposure_ms": 0.1, "readout_ms": 1.5}
//! }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::ColorType;

use super::timing::CameraTiming;
use super::{FrameSource, SourceCapabilities};
use crate::clock::{ms_to_ns, Clock};
use crate::{Error, RawFrame, Result, SheetGeometry};

/// Sidecar contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackMetadata {
    pub geometry: SheetGeometry,
    pub timing: CameraTiming,
}

impl StackMetadata {
    pub fn from_json(text: &str) -> Result<Self> {
        let meta: Self = serde_json::from_str(text)
            .map_err(|e| Error::Metadata(format!("invalid sidecar: {e}")))?;
        meta.geometry
            .validate()
            .map_err(|e| Error::Metadata(e.to_string()))?;
        meta.timing.validate().map_err(|e| Error::Metadata(e.to_string()))?;
        Ok(meta)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Metadata(format!("cannot read sidecar {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Sidecar next to a stack: `<stem>.json` for a file, `metadata.json`
/// inside a directory.
pub fn sidecar_path(stack: &Path) -> PathBuf {
    if stack.is_dir() {
        stack.join("metadata.json")
    } else {
        stack.with_extension("json")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StackFormat {
    Raw,
    Tiff,
}

fn format_of(path: &Path) -> Option<StackFormat> {
    match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
        "raw" | "bin" => Some(StackFormat::Raw),
        "tif" | "tiff" => Some(StackFormat::Tiff),
        _ => None,
    }
}

fn read_raw_frames(path: &Path, w: usize, h: usize) -> Result<Vec<Vec<u16>>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let frame_bytes = w * h * 2;
    if bytes.is_empty() || bytes.len() % frame_bytes != 0 {
        return Err(Error::Metadata(format!(
            "{} holds {} bytes, not a whole number of {w}x{h} 16-bit frames",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(frame_bytes)
        .map(|f| f.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
        .collect())
}

fn read_tiff_frames(path: &Path, w: usize, h: usize) -> Result<Vec<Vec<u16>>> {
    let mut decoder = Decoder::new(BufReader::new(File::open(path)?))?;
    let mut frames = Vec::new();
    loop {
        let (tw, th) = decoder.dimensions()?;
        match decoder.colortype()? {
            ColorType::Gray(16) => {}
            other => {
                return Err(Error::Metadata(format!(
                    "{}: expected 16-bit grayscale pages, found {other:?}",
                    path.display()
                )))
            }
        }
        if tw as usize != w || th as usize != h {
            return Err(Error::Metadata(format!(
                "{}: page is {tw}x{th}, metadata says {w}x{h}",
                path.display()
            )));
        }
        match decoder.read_image()? {
            DecodingResult::U16(px) => frames.push(px),
            _ => return Err(Error::Metadata(format!("{}: page is not 16-bit", path.display()))),
        }
        if !decoder.more_images() {
            break;
        }
        decoder.next_image()?;
    }
    Ok(frames)
}

/// Writes frames as one raw file.
pub fn write_raw_stack(path: impl AsRef<Path>, frames: &[RawFrame]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for f in frames {
        for v in &f.pixels {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes frames as a multi-page 16-bit grayscale TIFF.
pub fn write_tiff_stack(path: impl AsRef<Path>, frames: &[RawFrame]) -> Result<()> {
    let mut encoder = TiffEncoder::new(BufWriter::new(File::create(path)?))?;
    for f in frames {
        encoder.write_image::<colortype::Gray16>(f.width as u32, f.height as u32, &f.pixels)?;
    }
    Ok(())
}

/// Replays a recorded stack in filename-lexicographic order.
pub struct FileSource {
    meta: StackMetadata,
    files: Vec<(PathBuf, StackFormat)>,
    next_file: usize,
    buffered: std::vec::IntoIter<Vec<u16>>,
    frame_counter: u64,
    pacing: Option<(Arc<dyn Clock>, u64)>,
    closed: bool,
}

/// Opens a stack file or a directory of stack files. With `metadata` absent
/// the sidecar is read from [`sidecar_path`].
pub fn open_stack(path: impl AsRef<Path>, metadata: Option<StackMetadata>) -> Result<FileSource> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} does not exist", path.display()),
        )));
    }
    let meta = match metadata {
        Some(m) => m,
        None => StackMetadata::load(sidecar_path(path))?,
    };
    let files = if path.is_dir() {
        let mut entries: Vec<(PathBuf, StackFormat)> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter_map(|p| format_of(&p).map(|f| (p, f)))
            .collect();
        entries.sort_by(|a, b| a.0.file_name().cmp(&b.0.file_name()));
        entries
    } else {
        let fmt = format_of(path)
            .ok_or_else(|| Error::Metadata(format!("{}: unknown stack format", path.display())))?;
        vec![(path.to_path_buf(), fmt)]
    };
    if files.is_empty() {
        return Err(Error::Metadata(format!("{}: no .raw or .tif files", path.display())));
    }
    let mut src = FileSource {
        meta,
        files,
        next_file: 0,
        buffered: Vec::new().into_iter(),
        frame_counter: 0,
        pacing: None,
        closed: false,
    };
    // Surface size and bit-depth errors at open time.
    src.load_next_file()?;
    Ok(src)
}

impl FileSource {
    /// Replays at the camera cadence of the stack's timing.
    pub fn paced(mut self, clock: Arc<dyn Clock>) -> Self {
        let start = clock.now_ns();
        self.pacing = Some((clock, start));
        self
    }

    pub fn metadata(&self) -> &StackMetadata {
        &self.meta
    }

    fn load_next_file(&mut self) -> Result<bool> {
        let Some((path, fmt)) = self.files.get(self.next_file).cloned() else {
            return Ok(false);
        };
        self.next_file += 1;
        let (w, h) = (self.meta.geometry.frame_width_px, self.meta.geometry.frame_height_px);
        let frames = match fmt {
            StackFormat::Raw => read_raw_frames(&path, w, h)?,
            StackFormat::Tiff => read_tiff_frames(&path, w, h)?,
        };
        self.buffered = frames.into_iter();
        Ok(true)
    }

    /// Reads every remaining frame.
    pub fn read_all(&mut self) -> Result<Vec<RawFrame>> {
        let mut out = Vec::new();
        loop {
            match self.next_frame() {
                Ok(f) => out.push(f),
                Err(Error::EndOfStream) => return Ok(out),
                Err(e) => return Err(e),
            }
        }
    }
}

impl FrameSource for FileSource {
    fn next_frame(&mut self) -> Result<RawFrame> {
        if self.closed {
            return Err(Error::Closed);
        }
        let pixels = loop {
            if let Some(px) = self.buffered.next() {
                break px;
            }
            if !self.load_next_file()? {
                return Err(Error::EndOfStream);
            }
        };
        let g = &self.meta.geometry;
        let n = g.slice_count as u64;
        let k = self.frame_counter;
        self.frame_counter += 1;
        let period = ms_to_ns(self.meta.timing.frame_period_ms());
        let timestamp_ns = match &self.pacing {
            Some((clock, start)) => {
                clock.sleep_until(start + (k + 1) * period);
                clock.now_ns()
            }
            None => (k + 1) * period,
        };
        let mut frame = RawFrame::new(g.frame_width_px, g.frame_height_px, pixels)
            .with_indices((k % n) as usize, k / n);
        frame.timestamp_ns = timestamp_ns;
        Ok(frame)
    }

    fn geometry(&self) -> &SheetGeometry {
        &self.meta.geometry
    }

    fn timing(&self) -> &CameraTiming {
        &self.meta.timing
    }

    fn capabilities(&self) -> SourceCapabilities {
        SourceCapabilities { stage: false, exposure: false }
    }

    fn close(&mut self) {
        self.closed = true;
    }
}
