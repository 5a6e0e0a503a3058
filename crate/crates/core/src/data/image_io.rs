use std::path::Path;

use image::{GrayImage, ImageReader};

use crate::error::{Error, Result};

/// Planar image with values in `[0, 1]`, stored channel-major (CHW).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Contract(format!(
                "{channels}x{height}x{width} image needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

fn decode(path: &Path) -> Result<image::DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Data(format!("{}: cannot decode image: {e}", path.display())))
}

/// Loads an 8-bit PNG as `channels` planes (1 = luminance, 3 = RGB).
pub fn load_image(path: &Path, channels: usize) -> Result<Image> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match channels {
        1 => img.to_luma8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
        3 => {
            let rgb = img.to_rgb8().into_raw();
            (0..3)
                .flat_map(|c| rgb.iter().skip(c).step_by(3).map(|&v| v as f32 / 255.0).collect::<Vec<_>>())
                .collect()
        }
        c => return Err(Error::Config(format!("unsupported channel count {c}"))),
    };
    Image::new(h, w, channels, data)
}

/// Loads a mask PNG; any nonzero pixel is anomalous.
pub fn load_mask(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let img = decode(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((h, w, img.into_raw().into_iter().map(|v| v != 0).collect()))
}

fn write_gray(path: &Path, height: usize, width: usize, bytes: Vec<u8>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let img = GrayImage::from_raw(width as u32, height as u32, bytes)
        .ok_or_else(|| Error::Contract("pixel buffer does not match image size".into()))?;
    img.save(path)
        .map_err(|e| Error::Data(format!("{}: cannot write PNG: {e}", path.display())))
}

pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes one plane of values in `[0, 1]` as an 8-bit grayscale PNG.
pub fn save_gray(path: &Path, height: usize, width: usize, values: &[f32]) -> Result<()> {
    write_gray(path, height, width, values.iter().map(|&v| to_u8(v)).collect())
}

pub fn save_mask(path: &Path, height: usize, width: usize, mask: &[bool]) -> Result<()> {
    write_gray(path, height, width, mask.iter().map(|&m| if m { 255 } else { 0 }).collect())
}

/// Writes an RGB PNG from interleaved bytes.
pub fn save_rgb(path: &Path, height: usize, width: usize, rgb: Vec<u8>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let img = image::RgbImage::from_raw(width as u32, height as u32, rgb)
        .ok_or_else(|| Error::Contract("pixel buffer does not match image size".into()))?;
    img.save(path)
        .map_err(|e| Error::Data(format!("{}: cannot write PNG: {e}", path.display())))
}
