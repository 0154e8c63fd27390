//! Binary frame packets.
//!
//! Every packet is a 64-byte little-endian header followed by the pixel
//! payload, so a single packet decodes without any session history.
//!
//! | offset | type  | field                                  |
//! |-------:|-------|----------------------------------------|
//! | 0      | [u8;4]| magic `SKSF`                           |
//! | 4      | u16   | version                                |
//! | 6      | u8    | pixel format (0 gray16, 1 gray8)       |
//! | 7      | u8    | flags (bit 0 complete, bit 1 rolling)  |
//! | 8      | u16   | channel id                             |
//! | 10     | u16   | width                                  |
//! | 12     | u16   | height                                 |
//! | 14     | u16   | view angle, centidegrees               |
//! | 16     | u64   | sweep index                            |
//! | 24     | u32   | slice index                            |
//! | 28     | u16   | gray8 offset                           |
//! | 30     | u16   | reserved, zero                         |
//! | 32     | f32   | gray8 scale                            |
//! | 36     | f32   | acquisition ms                         |
//! | 40     | f32   | processing ms                          |
//! | 44     | f32   | plotting ms                            |
//! | 48     | f32   | lag ms                                 |
//! | 52     | u32   | dropped frames                         |
//! | 56     | u32   | payload length, bytes                  |
//! | 60     | f32   | output pixel pitch, µm                 |
//!
//! Gray8 payloads store `round((v − offset) / scale)`; a constant image
//! is all zeros with `offset` set to the constant and `scale` 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use skewstream_core::image::Gray8;
use skewstream_core::pipeline::{DisplayImage, StageTimings, UpdateMode};
use skewstream_core::Image16;

pub const MAGIC: [u8; 4] = *b"SKSF";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 64;

const FLAG_COMPLETE: u8 = 1;
const FLAG_ROLLING: u8 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum PacketError {
    #[error("image {width}x{height} exceeds the 65535 px header limit")]
    Oversize { width: usize, height: usize },
    #[error("packet of {0} bytes is shorter than the header")]
    Truncated(usize),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported packet version {0}")]
    Version(u16),
    #[error("unknown pixel format {0}")]
    Format(u8),
    #[error("payload is {actual} bytes, header implies {expected}")]
    PayloadLength { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelFormat {
    #[default]
    Gray16,
    Gray8,
}

impl PixelFormat {
    pub fn bytes_per_pixel(self) -> usize {
        match self {
            PixelFormat::Gray16 => 2,
            PixelFormat::Gray8 => 1,
        }
    }

    fn code(self) -> u8 {
        match self {
            PixelFormat::Gray16 => 0,
            PixelFormat::Gray8 => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self, PacketError> {
        match code {
            0 => Ok(PixelFormat::Gray16),
            1 => Ok(PixelFormat::Gray8),
            other => Err(PacketError::Format(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketHeader {
    pub version: u16,
    pub pixel_format: PixelFormat,
    pub complete: bool,
    pub rolling: bool,
    pub channel_id: u16,
    pub width: u16,
    pub height: u16,
    pub view_angle_centideg: u16,
    pub sweep_index: u64,
    pub slice_index: u32,
    pub gray8_offset: u16,
    pub gray8_scale: f32,
    pub timings: StageTimings,
    pub drops: u32,
    pub payload_len: u32,
    pub out_pitch_um: f32,
}

impl PacketHeader {
    pub fn view_angle_deg(&self) -> f64 {
        f64::from(self.view_angle_centideg) / 100.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePacket {
    pub header: PacketHeader,
    pub payload: Vec<u8>,
}

/// Angle in hundredths of a degree, rounded to nearest.
pub fn centidegrees(deg: f64) -> u16 {
    (deg * 100.0).round().clamp(0.0, f64::from(u16::MAX)) as u16
}

impl FramePacket {
    pub fn from_display(image: &DisplayImage, format: PixelFormat, drops: u64) -> Result<Self, PacketError> {
        let (w, h) = (image.image.width, image.image.height);
        if w > usize::from(u16::MAX) || h > usize::from(u16::MAX) {
            return Err(PacketError::Oversize { width: w, height: h });
        }
        let (payload, offset, scale) = match format {
            PixelFormat::Gray16 => (image.image.to_raw_le(), 0, 0.0),
            PixelFormat::Gray8 => {
                let Gray8 { pixels, offset, scale, .. } = image.image.to_gray8();
                (pixels, offset, scale)
            }
        };
        let header = PacketHeader {
            version: VERSION,
            pixel_format: format,
            complete: image.complete,
            rolling: image.mode == UpdateMode::Rolling,
            channel_id: image.channel_id,
            width: w as u16,
            height: h as u16,
            view_angle_centideg: centidegrees(image.view_angle_deg),
            sweep_index: image.sweep_index,
            slice_index: image.slice_index as u32,
            gray8_offset: offset,
            gray8_scale: scale,
            timings: image.timings,
            drops: drops.min(u64::from(u32::MAX)) as u32,
            payload_len: payload.len() as u32,
            out_pitch_um: image.out_pitch_um as f32,
        };
        Ok(Self { header, payload })
    }

    pub fn encode(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&h.version.to_le_bytes());
        out.push(h.pixel_format.code());
        out.push((u8::from(h.complete) * FLAG_COMPLETE) | (u8::from(h.rolling) * FLAG_ROLLING));
        for v in [h.channel_id, h.width, h.height, h.view_angle_centideg] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&h.sweep_index.to_le_bytes());
        out.extend_from_slice(&h.slice_index.to_le_bytes());
        out.extend_from_slice(&h.gray8_offset.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        let t = &h.timings;
        for v in [h.gray8_scale, t.acquisition_ms as f32, t.processing_ms as f32, t.plotting_ms as f32, t.lag_ms as f32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&h.drops.to_le_bytes());
        out.extend_from_slice(&h.payload_len.to_le_bytes());
        out.extend_from_slice(&h.out_pitch_um.to_le_bytes());
        debug_assert_eq!(out.len(), HEADER_LEN);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PacketError> {
        if bytes.len() < HEADER_LEN {
            return Err(PacketError::Truncated(bytes.len()));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(PacketError::BadMagic(magic));
        }
        let version = u16_at(4);
        if version != VERSION {
            return Err(PacketError::Version(version));
        }
        let pixel_format = PixelFormat::from_code(bytes[6])?;
        let flags = bytes[7];
        let header = PacketHeader {
            version,
            pixel_format,
            complete: flags & FLAG_COMPLETE != 0,
            rolling: flags & FLAG_ROLLING != 0,
            channel_id: u16_at(8),
            width: u16_at(10),
            height: u16_at(12),
            view_angle_centideg: u16_at(14),
            sweep_index: u64::from_le_bytes(bytes[16..24].try_into().unwrap()),
            slice_index: u32_at(24),
            gray8_offset: u16_at(28),
            gray8_scale: f32_at(32),
            timings: StageTimings {
                acquisition_ms: f64::from(f32_at(36)),
                processing_ms: f64::from(f32_at(40)),
                plotting_ms: f64::from(f32_at(44)),
                lag_ms: f64::from(f32_at(48)),
            },
            drops: u32_at(52),
            payload_len: u32_at(56),
            out_pitch_um: f32_at(60),
        };
        let expected = usize::from(header.width) * usize::from(header.height) * pixel_format.bytes_per_pixel();
        let payload = &bytes[HEADER_LEN..];
        if header.payload_len as usize != expected || payload.len() != expected {
            return Err(PacketError::PayloadLength { expected, actual: payload.len() });
        }
        Ok(Self { header, payload: payload.to_vec() })
    }

    /// Pixel values; gray8 payloads are expanded with the header's offset and
    /// scale.
    pub fn to_image(&self) -> Image16 {
        let (w, h) = (usize::from(self.header.width), usize::from(self.header.height));
        let pixels = match self.header.pixel_format {
            PixelFormat::Gray16 => self.payload.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect(),
            PixelFormat::Gray8 => {
                let (offset, scale) = (f32::from(self.header.gray8_offset), self.header.gray8_scale);
                self.payload
                    .iter()
                    .map(|&c| (offset + f32::from(c) * scale).round().min(f32::from(u16::MAX)) as u16)
                    .collect()
            }
        };
        Image16::new(w, h, pixels)
    }
}

/// Convenience wrapper: display image straight to wire bytes.
pub fn encode_frame_packet(image: &DisplayImage, format: PixelFormat, drops: u64) -> Result<Vec<u8>, PacketError> {
    Ok(FramePacket::from_display(image, format, drops)?.encode())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn display(image: Image16) -> DisplayImage {
        DisplayImage {
            image,
            channel_id: 3,
            sweep_index: 41,
            slice_index: 9,
            view_angle_deg: 59.996,
            shear_px: 0.75,
            out_pitch_um: 0.115,
            mode: UpdateMode::Rolling,
            complete: true,
            timings: StageTimings { acquisition_ms: 80.0, processing_ms: 12.5, plotting_ms: 3.25, lag_ms: 17.0 },
            emitted_ns: 0,
        }
    }

    #[test]
    fn single_pixel_is_little_endian() {
        let bytes = encode_frame_packet(&display(Image16::new(1, 1, vec![7])), PixelFormat::Gray16, 0).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 2);
        assert_eq!(&bytes[HEADER_LEN..], &[0x07, 0x00]);
        assert_eq!(&bytes[0..4], b"SKSF");
        assert_eq!(&bytes[10..14], &[1, 0, 1, 0]);
    }

    #[test]
    fn header_fields_sit_at_fixed_offsets() {
        let bytes = encode_frame_packet(&display(Image16::zeros(2, 3)), PixelFormat::Gray16, 5).unwrap();
        assert_eq!(bytes[6], 0);
        assert_eq!(bytes[7], FLAG_COMPLETE | FLAG_ROLLING);
        assert_eq!(u16::from_le_bytes([bytes[8], bytes[9]]), 3);
        assert_eq!(u16::from_le_bytes([bytes[14], bytes[15]]), 6000);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 41);
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 9);
        assert_eq!(f32::from_le_bytes(bytes[36..40].try_into().unwrap()), 80.0);
        assert_eq!(u32::from_le_bytes(bytes[52..56].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(bytes[56..60].try_into().unwrap()), 12);
    }

    #[test]
    fn gray8_of_constant_image_is_zero_with_offset() {
        let p = FramePacket::from_display(&display(Image16::new(2, 2, vec![500; 4])), PixelFormat::Gray8, 0).unwrap();
        assert_eq!(p.payload, vec![0; 4]);
        assert_eq!((p.header.gray8_offset, p.header.gray8_scale), (500, 0.0));
        assert_eq!(p.to_image(), Image16::new(2, 2, vec![500; 4]));
    }

    #[test]
    fn oversize_and_malformed_inputs_are_rejected() {
        let wide = display(Image16::zeros(70_000, 1));
        assert_eq!(
            FramePacket::from_display(&wide, PixelFormat::Gray16, 0),
            Err(PacketError::Oversize { width: 70_000, height: 1 })
        );
        let good = encode_frame_packet(&display(Image16::zeros(2, 2)), PixelFormat::Gray16, 0).unwrap();
        assert_eq!(FramePacket::decode(&good[..10]), Err(PacketError::Truncated(10)));
        assert!(matches!(FramePacket::decode(&good[..good.len() - 1]), Err(PacketError::PayloadLength { .. })));
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(FramePacket::decode(&bad), Err(PacketError::BadMagic(_))));
        let mut bad = good;
        bad[6] = 9;
        assert_eq!(FramePacket::decode(&bad), Err(PacketError::Format(9)));
    }

    proptest! {
        #[test]
        fn gray16_round_trips(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
            let pixels: Vec<u16> = (0..w * h).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 17) as u16).collect();
            let d = display(Image16::new(w, h, pixels));
            let bytes = encode_frame_packet(&d, PixelFormat::Gray16, 2).unwrap();
            let p = FramePacket::decode(&bytes).unwrap();
            prop_assert_eq!(p.to_image(), d.image);
            prop_assert_eq!(p.header.timings, d.timings);
            prop_assert_eq!(p.encode(), bytes);
        }

        #[test]
        fn gray8_stays_within_half_a_step(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
            let pixels: Vec<u16> = (0..w * h).map(|i| (seed.wrapping_mul(i as u64 + 3) >> 40) as u16).collect();
            let d = display(Image16::new(w, h, pixels));
            let p = FramePacket::decode(&encode_frame_packet(&d, PixelFormat::Gray8, 0).unwrap()).unwrap();
            let step = f64::from(p.header.gray8_scale);
            for (a, b) in p.to_image().pixels.iter().zip(&d.image.pixels) {
                prop_assert!((f64::from(*a) - f64::from(*b)).abs() <= 0.5 * step + 1.0);
            }
        }
    }
}
