//! Fixed 102-feature radiomics vector computed over a region of interest.
//!
//! Block order: shape2D (9), first order (18), GLCM (24), GLRLM (16),
//! GLSZM (16), NGTDM (5), GLDM (14). Texture classes operate on the ROI
//! discretized into a fixed number of equal-width gray-level bins.
//!
//! Degenerate inputs never produce NaN:
//! - zero-variance marginals give GLCM Correlation = MCC = 1;
//! - `0 * log 0` is taken as 0 in every entropy;
//! - an NGTDM Coarseness denominator below [`EPSILON`] yields `1 / EPSILON`;
//! - texture matrices without any pixel pair fall back to the constant-ROI
//!   matrix (a single entry on the ROI's only level).

mod discretize;
mod first_order;
mod glcm;
mod ngtdm;
mod runs;
mod schema;
mod shape;

use serde::{Deserialize, Serialize};

use crate::data::{roi_mask_from_bbox, BoundingBox, DataError, GrayImage};

pub use discretize::{discretize, DiscretizedRoi};
pub use first_order::first_order_features;
pub use glcm::{glcm_features, glcm_features_from_matrix, glcm_matrix, GLCM_DIRECTIONS};
pub use ngtdm::ngtdm_features;
pub use runs::{
    gldm_features, gldm_matrix, glrlm_features, glrlm_matrix, glszm_features, glszm_matrix,
    run_zone_features, size_matrix_features, SizeMatrix,
};
pub use schema::{FEATURE_NAMES, SCHEMA_ID};
pub use shape::shape2d_features;

pub const FEATURE_COUNT: usize = 102;

/// Small-denominator guard used by the degenerate-case conventions.
pub const EPSILON: f64 = 1e-12;

pub const SHAPE_COUNT: usize = 9;
pub const FIRST_ORDER_COUNT: usize = 18;
pub const GLCM_COUNT: usize = 24;
pub const GLRLM_COUNT: usize = 16;
pub const GLSZM_COUNT: usize = 16;
pub const NGTDM_COUNT: usize = 5;
pub const GLDM_COUNT: usize = 14;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RadiomicsError {
    #[error("region of interest is empty")]
    EmptyMask,
    #[error("mask is {mask_w}x{mask_h} but image is {image_w}x{image_h}")]
    DimensionMismatch { mask_w: usize, mask_h: usize, image_w: usize, image_h: usize },
    #[error("bin count must be at least 2, got {0}")]
    BadBins(usize),
    #[error(transparent)]
    Roi(#[from] DataError),
}

/// Boolean region-of-interest mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoiMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl RoiMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, RadiomicsError> {
        if bits.len() != width * height {
            return Err(RadiomicsError::DimensionMismatch {
                mask_w: width,
                mask_h: height,
                image_w: width,
                image_h: bits.len() / width.max(1),
            });
        }
        if !bits.iter().any(|&b| b) {
            return Err(RadiomicsError::EmptyMask);
        }
        Ok(Self { width, height, bits })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![true; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Membership test that treats out-of-image coordinates as outside.
    pub fn contains(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    pub(crate) fn check_matches(&self, image: &GrayImage) -> Result<(), RadiomicsError> {
        if self.width != image.width() || self.height != image.height() {
            return Err(RadiomicsError::DimensionMismatch {
                mask_w: self.width,
                mask_h: self.height,
                image_w: image.width(),
                image_h: image.height(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RadiomicsConfig {
    pub bins: usize,
}

impl Default for RadiomicsConfig {
    fn default() -> Self {
        Self { bins: 32 }
    }
}

/// The 102 features in [`FEATURE_NAMES`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct RadiomicsVector {
    pub values: Vec<f64>,
    pub schema_id: &'static str,
}

impl RadiomicsVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.values[i])
    }
}

/// Full feature vector over an arbitrary mask.
pub fn extract_with_mask(
    image: &GrayImage,
    mask: &RoiMask,
    config: &RadiomicsConfig,
) -> Result<RadiomicsVector, RadiomicsError> {
    mask.check_matches(image)?;
    let disc = discretize(image, mask, config.bins)?;
    let mut values = Vec::with_capacity(FEATURE_COUNT);
    values.extend(shape2d_features(mask)?);
    values.extend(first_order_features(image, mask, &disc)?);
    values.extend(glcm_features(&disc));
    let (glrlm, glszm, gldm) = run_zone_features(&disc);
    values.extend(glrlm);
    values.extend(glszm);
    values.extend(ngtdm_features(&disc));
    values.extend(gldm);
    debug_assert_eq!(values.len(), FEATURE_COUNT);
    debug_assert!(values.iter().all(|v| v.is_finite()), "non-finite radiomics feature");
    Ok(RadiomicsVector { values, schema_id: SCHEMA_ID })
}

/// Feature vector over the (clipped) bounding box; the whole image is the
/// ROI when no box is given.
pub fn extract_radiomics(
    image: &GrayImage,
    bbox: Option<&BoundingBox>,
    config: &RadiomicsConfig,
) -> Result<RadiomicsVector, RadiomicsError> {
    let mask = roi_mask_from_bbox(image, bbox)?;
    extract_with_mask(image, &mask, config)
}

/// 8-neighbourhood offsets.
pub(crate) const NEIGHBORS_8: [(isize, isize); 8] =
    [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// `-p log2 p` with `0 log 0 = 0`.
pub(crate) fn entropy_term(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}
