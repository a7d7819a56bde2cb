use std::io::{Read, Write};

use super::PrepError;

pub const CHANNELS: usize = 3;
const HEADER_LEN: usize = 12;

/// Row-major, channel-interleaved RGB image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelBuffer {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl PixelBuffer {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, PrepError> {
        if width == 0 || height == 0 {
            return Err(PrepError::InvalidImage(format!("zero-sized image {width}x{height}")));
        }
        let expected = width * height * CHANNELS;
        if data.len() != expected {
            return Err(PrepError::InvalidImage(format!(
                "expected {expected} values for {width}x{height}x{CHANNELS}, got {}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(PrepError::InvalidImage(format!("value {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self, PrepError> {
        Self::new(width, height, vec![value; width * height * CHANNELS])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    /// Reads the raw format: three little-endian `u32` (width, height,
    /// channels) followed by little-endian `f32` samples.
    pub fn read_from<R: Read>(mut input: R) -> Result<Self, PrepError> {
        let mut header = [0u8; HEADER_LEN];
        input.read_exact(&mut header)?;
        let field = |i: usize| u32::from_le_bytes(header[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
        let (width, height, channels) = (field(0), field(1), field(2));
        if channels != CHANNELS {
            return Err(PrepError::InvalidImage(format!(
                "expected {CHANNELS} channels, got {channels}"
            )));
        }
        let mut bytes = vec![0u8; width * height * channels * 4];
        input.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::new(width, height, data)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for v in [self.width, self.height, CHANNELS] {
            out.write_all(&(v as u32).to_le_bytes())?;
        }
        for v in &self.data {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Source coordinate and blend factor for each output coordinate along one axis.
fn axis_taps(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = src_len as f64 / dst_len as f64;
    let last = (src_len - 1) as f64;
    (0..dst_len)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src_len - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Resizes to `target`×`target` without preserving aspect ratio, using
/// bilinear interpolation with half-pixel centers and edge clamping.
pub fn squish_resize(img: &PixelBuffer, target: usize) -> Result<PixelBuffer, PrepError> {
    if target == 0 {
        return Err(PrepError::InvalidArgument("target side must be positive".into()));
    }
    let xs = axis_taps(img.width, target);
    let ys = axis_taps(img.height, target);
    let mut data = Vec::with_capacity(target * target * CHANNELS);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..CHANNELS {
                let top = (1.0 - fx) * img.get(x0, y0, c) as f64 + fx * img.get(x1, y0, c) as f64;
                let bottom = (1.0 - fx) * img.get(x0, y1, c) as f64 + fx * img.get(x1, y1, c) as f64;
                let v = (1.0 - fy) * top + fy * bottom;
                data.push((v as f32).clamp(0.0, 1.0));
            }
        }
    }
    Ok(PixelBuffer {
        width: target,
        height: target,
        data,
    })
}
