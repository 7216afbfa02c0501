use std::path::Path;

use image::imageops::FilterType;
use serde::{Deserialize, Serialize};

use super::DataError;

/// 8-bit grayscale raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, DataError> {
        if width == 0 || height == 0 {
            return Err(DataError::Invalid(format!("image extent {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(DataError::Invalid(format!(
                "{width}x{height} image with {} pixels",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, pixels: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Reads an 8-bit PNG or binary PGM; other pixel formats are converted
    /// to luma.
    pub fn open(path: &Path) -> Result<Self, DataError> {
        let img = image::open(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
        let luma = img.into_luma8();
        let (w, h) = luma.dimensions();
        Self::new(w as usize, h as usize, luma.into_raw())
    }

    /// Writes PNG or PGM depending on the extension.
    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("dimensions checked at construction");
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("pgm") => image::ImageFormat::Pnm,
            _ => image::ImageFormat::Png,
        };
        if format == image::ImageFormat::Pnm {
            let file = std::fs::File::create(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
            let enc = image::codecs::pnm::PnmEncoder::new(std::io::BufWriter::new(file))
                .with_subtype(image::codecs::pnm::PnmSubtype::Graymap(image::codecs::pnm::SampleEncoding::Binary));
            buf.write_with_encoder(enc).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))
        } else {
            buf.save_with_format(path, format).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))
        }
    }

    /// Bilinear resize to `size x size`.
    pub fn resize_square(&self, size: usize) -> GrayImage {
        if self.width == size && self.height == size {
            return self.clone();
        }
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("dimensions checked at construction");
        let out = image::imageops::resize(&buf, size as u32, size as u32, FilterType::Triangle);
        GrayImage { width: size, height: size, pixels: out.into_raw() }
    }

    /// Pixels scaled to `[0, 1]`.
    pub fn to_unit_f32(&self) -> Vec<f32> {
        self.pixels.iter().map(|&p| p as f32 / 255.0).collect()
    }
}

/// Axis-aligned box in pixel coordinates: top-left corner plus extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl BoundingBox {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> Result<Self, DataError> {
        if w < 1 || h < 1 {
            return Err(DataError::Invalid(format!("bounding box extent {w}x{h}")));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn whole(image: &GrayImage) -> Self {
        Self { x: 0, y: 0, w: image.width() as i64, h: image.height() as i64 }
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = (self.x + self.w).max(other.x + other.w);
        let y1 = (self.y + self.h).max(other.y + other.h);
        BoundingBox { x: x0, y: y0, w: x1 - x0, h: y1 - y0 }
    }

    /// Intersection with `[0, width) x [0, height)` as `(x0, y0, x1, y1)`
    /// half-open bounds, or `None` when empty.
    pub fn clip(&self, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        let x0 = self.x.max(0);
        let y0 = self.y.max(0);
        let x1 = (self.x + self.w).min(width as i64);
        let y1 = (self.y + self.h).min(height as i64);
        (x1 > x0 && y1 > y0).then_some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
    }

    /// Box rescaled from an image of `from` pixels wide/high to `to`.
    pub fn rescale(&self, from: (usize, usize), to: (usize, usize)) -> BoundingBox {
        let sx = to.0 as f64 / from.0 as f64;
        let sy = to.1 as f64 / from.1 as f64;
        let x0 = (self.x as f64 * sx).floor() as i64;
        let y0 = (self.y as f64 * sy).floor() as i64;
        let x1 = (((self.x + self.w) as f64) * sx).ceil() as i64;
        let y1 = (((self.y + self.h) as f64) * sy).ceil() as i64;
        BoundingBox { x: x0, y: y0, w: (x1 - x0).max(1), h: (y1 - y0).max(1) }
    }
}
