//! 8-bit grayscale images and their PNG encoding.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat};

use super::GatewayError;

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageGray {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl ImageGray {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, GatewayError> {
        if pixels.len() != width as usize * height as usize {
            return Err(GatewayError::Codec(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = value;
    }

    /// Decodes a PNG; colour inputs are converted to luma.
    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self, GatewayError> {
        let decoded = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| GatewayError::Codec(e.to_string()))?
            .into_luma8();
        let (width, height) = decoded.dimensions();
        Ok(Self {
            width,
            height,
            pixels: decoded.into_raw(),
        })
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>, GatewayError> {
        let img = GrayImage::from_raw(self.width, self.height, self.pixels.clone())
            .ok_or_else(|| GatewayError::Codec("pixel buffer does not match dimensions".into()))?;
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)
            .map_err(|e| GatewayError::Codec(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| GatewayError::Codec(format!("{}: {e}", path.display())))?;
        Self::from_png_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GatewayError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_png_bytes()?)
            .map_err(|e| GatewayError::Codec(format!("{}: {e}", path.display())))
    }
}
