use serde::{Deserialize, Serialize};

/// One camera exposure (or one channel of it, after splitting).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawFrame {
    pub width: usize,
    pub height: usize,
    /// Row-major, `height` rows of `width` pixels.
    pub pixels: Vec<u16>,
    pub slice_index: usize,
    pub sweep_index: u64,
    pub channel_id: u16,
    pub timestamp_ns: u64,
}

impl RawFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u16>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel count must equal width*height");
        Self {
            width,
            height,
            pixels,
            slice_index: 0,
            sweep_index: 0,
            channel_id: 0,
            timestamp_ns: 0,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn with_indices(mut self, slice_index: usize, sweep_index: u64) -> Self {
        self.slice_index = slice_index;
        self.sweep_index = sweep_index;
        self
    }

    #[inline]
    pub fn get(&self, x: usize, row: usize) -> u16 {
        self.pixels[row * self.width + x]
    }

    pub fn row(&self, row: usize) -> &[u16] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }
}
