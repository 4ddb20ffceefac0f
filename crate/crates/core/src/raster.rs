//! Image buffers shared by every stage plus their on-disk codecs.
//!
//! RGB frames are 8-bit PNG. Label maps are 8-bit binary PGM and depth maps
//! are 16-bit binary PGM holding millimeters (0 = invalid).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};

use crate::error::{Error, Result};

pub type RgbImage = image::RgbImage;

pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_ROBOT: u8 = 1;
pub const LABEL_OBJECT: u8 = 2;
pub const LABEL_TABLE: u8 = 3;
/// Render-only label for a placed container. Never written to exchange masks.
pub const LABEL_CONTAINER: u8 = 4;

/// Per-pixel 8-bit semantic labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask(pub ImageBuffer<Luma<u8>, Vec<u8>>);

impl LabelMask {
    pub fn new(width: u32, height: u32) -> Self {
        LabelMask(ImageBuffer::new(width, height))
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        LabelMask(ImageBuffer::from_fn(width, height, |x, y| Luma([f(x, y)])))
    }

    pub fn width(&self) -> u32 {
        self.0.width()
    }

    pub fn height(&self) -> u32 {
        self.0.height()
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.0.get_pixel(x, y).0[0]
    }

    pub fn set(&mut self, x: u32, y: u32, label: u8) {
        self.0.put_pixel(x, y, Luma([label]));
    }

    pub fn as_raw(&self) -> &[u8] {
        self.0.as_raw()
    }

    pub fn count(&self, label: u8) -> usize {
        self.as_raw().iter().filter(|&&l| l == label).count()
    }

    /// True if the pixel carries the robot or the manipulated object.
    pub fn is_subject(label: u8) -> bool {
        label == LABEL_ROBOT || label == LABEL_OBJECT
    }
}

/// Metric depth stored as 16-bit millimeters; 0 marks an invalid pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthMap(pub ImageBuffer<Luma<u16>, Vec<u16>>);

impl DepthMap {
    pub fn new(width: u32, height: u32) -> Self {
        DepthMap(ImageBuffer::new(width, height))
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u16) -> Self {
        DepthMap(ImageBuffer::from_fn(width, height, |x, y| Luma([f(x, y)])))
    }

    pub fn width(&self) -> u32 {
        self.0.width()
    }

    pub fn height(&self) -> u32 {
        self.0.height()
    }

    pub fn millimeters(&self, x: u32, y: u32) -> u16 {
        self.0.get_pixel(x, y).0[0]
    }

    pub fn meters(&self, x: u32, y: u32) -> Option<f64> {
        match self.millimeters(x, y) {
            0 => None,
            mm => Some(f64::from(mm) / 1000.0),
        }
    }

    /// Quantize meters to millimeters; out-of-range or non-finite values map to 0.
    pub fn encode_meters(meters: f64) -> u16 {
        if !meters.is_finite() || meters <= 0.0 {
            return 0;
        }
        let mm = (meters * 1000.0).round();
        if mm >= f64::from(u16::MAX) {
            0
        } else {
            mm as u16
        }
    }
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage> {
    match open_image(path)? {
        DynamicImage::ImageRgb8(img) => Ok(img),
        other => Err(Error::invalid(
            path.display().to_string(),
            format!("expected 8-bit RGB, found {:?}", other.color()),
        )),
    }
}

pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<()> {
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn read_label_pgm(path: &Path) -> Result<LabelMask> {
    match open_image(path)? {
        DynamicImage::ImageLuma8(img) => Ok(LabelMask(img)),
        other => Err(Error::invalid(
            path.display().to_string(),
            format!("expected 8-bit graymap, found {:?}", other.color()),
        )),
    }
}

pub fn read_depth_pgm(path: &Path) -> Result<DepthMap> {
    match open_image(path)? {
        DynamicImage::ImageLuma16(img) => Ok(DepthMap(img)),
        other => Err(Error::invalid(
            path.display().to_string(),
            format!("expected 16-bit graymap, found {:?}", other.color()),
        )),
    }
}

/// Binary PGM (P5); 16-bit samples are big-endian per the Netpbm format.
fn write_pgm(path: &Path, width: u32, height: u32, maxval: u16, samples: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n{width} {height}\n{maxval}\n")
        .and_then(|_| out.write_all(samples))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_label_pgm(path: &Path, mask: &LabelMask) -> Result<()> {
    write_pgm(path, mask.width(), mask.height(), 255, mask.as_raw())
}

pub fn write_depth_pgm(path: &Path, depth: &DepthMap) -> Result<()> {
    let bytes: Vec<u8> = depth
        .0
        .as_raw()
        .iter()
        .flat_map(|v| v.to_be_bytes())
        .collect();
    write_pgm(path, depth.width(), depth.height(), u16::MAX, &bytes)
}

/// ITU-R BT.601 luma in 8-bit units.
pub fn luma(px: &image::Rgb<u8>) -> f64 {
    0.299 * f64::from(px.0[0]) + 0.587 * f64::from(px.0[1]) + 0.114 * f64::from(px.0[2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_pgm_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pgm");
        let depth = DepthMap::from_fn(5, 3, |x, y| (x * 1000 + y * 7 + 1) as u16 * 13);
        write_depth_pgm(&path, &depth).unwrap();
        let back = read_depth_pgm(&path).unwrap();
        assert_eq!(depth, back);
        let raw = std::fs::read(&path).unwrap();
        assert!(raw.starts_with(b"P5"));
    }

    #[test]
    fn label_pgm_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let mask = LabelMask::from_fn(7, 4, |x, y| ((x + y) % 4) as u8);
        write_label_pgm(&path, &mask).unwrap();
        assert_eq!(read_label_pgm(&path).unwrap(), mask);
    }

    #[test]
    fn depth_reader_rejects_8bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        write_label_pgm(&path, &LabelMask::new(2, 2)).unwrap();
        assert!(matches!(
            read_depth_pgm(&path),
            Err(Error::InvalidField { .. })
        ));
    }

    #[test]
    fn encode_meters_saturates_to_invalid() {
        assert_eq!(DepthMap::encode_meters(0.74), 740);
        assert_eq!(DepthMap::encode_meters(-1.0), 0);
        assert_eq!(DepthMap::encode_meters(f64::INFINITY), 0);
        assert_eq!(DepthMap::encode_meters(100.0), 0);
    }
}
