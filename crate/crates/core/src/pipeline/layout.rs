use serde::{Deserialize, Serialize};

use crate::{Error, RawFrame, Result};

/// Rectangle of the camera sensor carrying one colour channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRegion {
    pub channel_id: u16,
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl ChannelRegion {
    fn overlaps(&self, other: &ChannelRegion) -> bool {
        self.x0 < other.x0 + other.w
            && other.x0 < self.x0 + self.w
            && self.y0 < other.y0 + other.h
            && other.y0 < self.y0 + self.h
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLayout {
    pub regions: Vec<ChannelRegion>,
}

impl ChannelLayout {
    /// One channel covering the whole `w × h` frame.
    pub fn single(w: usize, h: usize) -> Self {
        Self { regions: vec![ChannelRegion { channel_id: 0, x0: 0, y0: 0, w, h }] }
    }

    /// `n` channels of `w × h` placed left to right.
    pub fn side_by_side(n: usize, w: usize, h: usize) -> Self {
        Self {
            regions: (0..n)
                .map(|c| ChannelRegion { channel_id: c as u16, x0: c * w, y0: 0, w, h })
                .collect(),
        }
    }

    pub fn channel_ids(&self) -> Vec<u16> {
        self.regions.iter().map(|r| r.channel_id).collect()
    }

    /// Bounding frame size implied by the regions.
    pub fn frame_size(&self) -> (usize, usize) {
        let w = self.regions.iter().map(|r| r.x0 + r.w).max().unwrap_or(0);
        let h = self.regions.iter().map(|r| r.y0 + r.h).max().unwrap_or(0);
        (w, h)
    }

    pub fn validate(&self, frame_w: usize, frame_h: usize) -> Result<()> {
        if self.regions.is_empty() {
            return Err(Error::param("channel layout needs at least one region"));
        }
        for (i, r) in self.regions.iter().enumerate() {
            if r.w == 0 || r.h == 0 {
                return Err(Error::param(format!("channel region {i} is empty")));
            }
            if r.x0 + r.w > frame_w || r.y0 + r.h > frame_h {
                return Err(Error::param(format!(
                    "channel region {i} ({}+{}, {}+{}) exceeds the {frame_w}x{frame_h} frame",
                    r.x0, r.w, r.y0, r.h
                )));
            }
            for (k, other) in self.regions.iter().enumerate().skip(i + 1) {
                if r.overlaps(other) {
                    return Err(Error::param(format!("channel regions {i} and {k} overlap")));
                }
                if r.channel_id == other.channel_id {
                    return Err(Error::param(format!("channel id {} is used twice", r.channel_id)));
                }
            }
        }
        Ok(())
    }
}

/// Cuts one camera frame into per-channel sub-frames.
pub fn split_channels(frame: &RawFrame, layout: &ChannelLayout) -> Result<Vec<RawFrame>> {
    layout.validate(frame.width, frame.height)?;
    Ok(layout
        .regions
        .iter()
        .map(|r| {
            let mut pixels = Vec::with_capacity(r.w * r.h);
            for row in r.y0..r.y0 + r.h {
                let start = row * frame.width + r.x0;
                pixels.extend_from_slice(&frame.pixels[start..start + r.w]);
            }
            RawFrame {
                width: r.w,
                height: r.h,
                pixels,
                slice_index: frame.slice_index,
                sweep_index: frame.sweep_index,
                channel_id: r.channel_id,
                timestamp_ns: frame.timestamp_ns,
            }
        })
        .collect())
}
