//! Dataset ingestion, ROI masks, splitting, batching and synthetic data.

mod image;
mod manifest;
mod split;
mod synth;

pub use image::{BoundingBox, GrayImage};
pub use manifest::{load_manifest, read_manifest, write_manifest, LoadedDataset, ManifestEntry};
pub use split::{make_batches, split_dataset, BatchMode, DatasetSplit};
pub use synth::{generate_synthetic_dataset, synthesize, SyntheticConfig};

use crate::radiomics::RoiMask;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("image for {id} not found at {path}")]
    MissingImage { id: String, path: String },
    #[error("configuration error: {0}")]
    Config(String),
}

/// One labeled image with its optional lesion box.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: GrayImage,
    /// 0 normal, 1 pneumonia.
    pub label: u8,
    pub bbox: Option<BoundingBox>,
}

/// Mask that is true exactly inside the clipped box, or everywhere when
/// no box is given.
pub fn roi_mask_from_bbox(image: &GrayImage, bbox: Option<&BoundingBox>) -> Result<RoiMask, DataError> {
    let (w, h) = (image.width(), image.height());
    let Some(b) = bbox else {
        return Ok(RoiMask::full(w, h));
    };
    let (x0, y0, x1, y1) = b
        .clip(w, h)
        .ok_or_else(|| DataError::Invalid(format!("bounding box {b:?} does not intersect {w}x{h} image")))?;
    let mut bits = vec![false; w * h];
    for y in y0..y1 {
        bits[y * w + x0..y * w + x1].fill(true);
    }
    RoiMask::new(w, h, bits).map_err(|e| DataError::Invalid(e.to_string()))
}
