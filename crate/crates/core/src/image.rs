//! 16-bit grayscale images and their golden-file encodings.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major 16-bit grayscale image. Rows run along the shear axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Image16 {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u16>,
}

impl Image16 {
    pub fn new(width: usize, height: usize, pixels: Vec<u16>) -> Self {
        assert_eq!(pixels.len(), width * height);
        Self { width, height, pixels }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0; width * height])
    }

    #[inline]
    pub fn get(&self, x: usize, row: usize) -> u16 {
        self.pixels[row * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, row: usize, v: u16) {
        self.pixels[row * self.width + x] = v;
    }

    pub fn row(&self, row: usize) -> &[u16] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }

    pub fn max_value(&self) -> u16 {
        self.pixels.iter().copied().max().unwrap_or(0)
    }

    pub fn count_nonzero(&self) -> usize {
        self.pixels.iter().filter(|&&v| v != 0).count()
    }

    /// Little-endian 16-bit, row-major, no header.
    pub fn to_raw_le(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_raw_le(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 2 {
            return Err(Error::Metadata(format!(
                "raw image of {} bytes does not match {width}x{height} 16-bit",
                bytes.len()
            )));
        }
        let pixels = bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        Ok(Self::new(width, height, pixels))
    }

    pub fn write_raw(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.to_raw_le())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_raw(path: impl AsRef<Path>, width: usize, height: usize) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_raw_le(width, height, &bytes)
    }

    /// 16-bit grayscale PNG; image rows become PNG rows.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        let mut encoder = png::Encoder::new(file, self.width as u32, self.height as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Sixteen);
        let mut writer = encoder.write_header().map_err(|e| Error::Png(e.to_string()))?;
        let data: Vec<u8> = self.pixels.iter().flat_map(|v| v.to_be_bytes()).collect();
        writer
            .write_image_data(&data)
            .map_err(|e| Error::Png(e.to_string()))?;
        Ok(())
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Self> {
        let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
        let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::Png(e.to_string()))?;
        if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
            return Err(Error::Png(format!(
                "expected 16-bit grayscale, got {:?} {:?}",
                info.color_type, info.bit_depth
            )));
        }
        let pixels = buf[..info.buffer_size()]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        Ok(Self::new(info.width as usize, info.height as usize, pixels))
    }
}

/// Min-max scaled 8-bit rendition of an [`Image16`].
///
/// `code = round((v - offset) / scale)`, `v ≈ offset + code * scale`. A
/// constant image maps to all zeros with `offset` equal to the constant and
/// `scale` 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Gray8 {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub offset: u16,
    pub scale: f32,
}

impl Image16 {
    pub fn to_gray8(&self) -> Gray8 {
        let min = self.pixels.iter().copied().min().unwrap_or(0);
        let max = self.pixels.iter().copied().max().unwrap_or(0);
        let scale = f32::from(max - min) / 255.0;
        let pixels = if max == min {
            vec![0; self.pixels.len()]
        } else {
            let inv = 255.0 / f64::from(max - min);
            self.pixels
                .iter()
                .map(|&v| (f64::from(v - min) * inv + 0.5).floor().min(255.0) as u8)
                .collect()
        };
        Gray8 { width: self.width, height: self.height, pixels, offset: min, scale }
    }
}
