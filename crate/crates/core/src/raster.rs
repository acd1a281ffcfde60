//! In-memory image buffers and loading.

use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<[u8; 3]>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("zero-dimension image".into()));
        }
        if data.len() != (width as usize) * (height as usize) {
            return Err(Error::InvalidInput(format!(
                "pixel buffer length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self> {
        GrayImage::new(width, height, vec![value; (width * height) as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        self.data[(y * self.width + x) as usize] = v;
    }

    /// ITU-R BT.601 luma conversion, rounded and clamped to `[0, 255]`.
    pub fn from_rgb(rgb: &RgbImage) -> Self {
        let data = rgb
            .data
            .iter()
            .map(|&[r, g, b]| luma(r, g, b))
            .collect();
        GrayImage {
            width: rgb.width,
            height: rgb.height,
            data,
        }
    }

    /// Per-pixel `255 - v`, used for the light-on-dark polarity.
    pub fn inverted(&self) -> Self {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| 255 - v).collect(),
        }
    }
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("zero-dimension image".into()));
        }
        if data.len() != (width as usize) * (height as usize) {
            return Err(Error::InvalidInput(format!(
                "pixel buffer length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.data[(y * self.width + x) as usize]
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.data
    }
}

pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let v = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    v.round().clamp(0.0, 255.0) as u8
}

/// Loads a PNG/JPEG/BMP file. Returns the grayscale view plus the color
/// image when the source had color channels.
pub fn load_image(path: &Path) -> Result<(GrayImage, Option<RgbImage>)> {
    let dynimg = image::open(path).map_err(|source| Error::ImageDecode {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (dynimg.width(), dynimg.height());
    match dynimg {
        image::DynamicImage::ImageLuma8(buf) => {
            let gray = GrayImage::new(w, h, buf.into_raw())?;
            Ok((gray, None))
        }
        other => {
            let rgb8 = other.to_rgb8();
            let data = rgb8.pixels().map(|p| [p[0], p[1], p[2]]).collect();
            let rgb = RgbImage::new(w, h, data)?;
            let gray = GrayImage::from_rgb(&rgb);
            Ok((gray, Some(rgb)))
        }
    }
}

/// Writes a grayscale image as PNG (fixtures, debug dumps).
pub fn save_gray_png(img: &GrayImage, path: &Path) -> Result<()> {
    let buf = image::GrayImage::from_raw(img.width, img.height, img.data.clone())
        .expect("buffer length checked at construction");
    buf.save(path).map_err(|e| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
        )
    })
}

/// Writes an RGB image as PNG (overlay dumps).
pub fn save_rgb_png(img: &RgbImage, path: &Path) -> Result<()> {
    let flat: Vec<u8> = img.data.iter().flat_map(|p| p.iter().copied()).collect();
    let buf = image::RgbImage::from_raw(img.width, img.height, flat)
        .expect("buffer length checked at construction");
    buf.save(path).map_err(|e| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_extremes() {
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(0, 0, 0), 0);
        // round(0.299 * 255) computed by hand
        assert_eq!(luma(255, 0, 0), 76);
    }

    #[test]
    fn rejects_zero_dimension() {
        assert!(GrayImage::new(0, 4, vec![]).is_err());
        assert!(GrayImage::new(4, 0, vec![]).is_err());
        assert!(GrayImage::new(2, 2, vec![0; 3]).is_err());
    }

    #[test]
    fn inversion_round_trips() {
        let img = GrayImage::new(2, 2, vec![0, 10, 200, 255]).unwrap();
        assert_eq!(img.inverted().inverted(), img);
        assert_eq!(img.inverted().get(0, 0), 255);
    }
}
