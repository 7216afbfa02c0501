use super::{RadiomicsError, RoiMask};
use crate::data::GrayImage;

/// ROI gray levels mapped to `1..=bins`; pixels outside the ROI hold 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscretizedRoi {
    width: usize,
    height: usize,
    levels: Vec<u16>,
    bins: usize,
}

impl DiscretizedRoi {
    /// Builds a discretized ROI directly from a level map (0 = outside).
    pub fn from_levels(width: usize, height: usize, levels: Vec<u16>, bins: usize) -> Self {
        assert_eq!(levels.len(), width * height, "level map size");
        assert!(levels.iter().all(|&l| (l as usize) <= bins), "level above bin count");
        assert!(levels.iter().any(|&l| l > 0), "empty ROI");
        Self { width, height, levels, bins }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of gray levels `G` (1 for a constant ROI).
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn levels(&self) -> &[u16] {
        &self.levels
    }

    /// Level at `(x, y)`, or 0 outside the image or ROI.
    pub fn level(&self, x: isize, y: isize) -> u16 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            0
        } else {
            self.levels[y as usize * self.width + x as usize]
        }
    }

    pub fn roi_count(&self) -> usize {
        self.levels.iter().filter(|&&l| l > 0).count()
    }
}

/// Equal-width binning of ROI intensities over the ROI's own `[min, max]`.
///
/// Integer arithmetic keeps the level map exactly invariant under positive
/// affine rescaling of the intensities.
pub fn discretize(image: &GrayImage, mask: &RoiMask, bins: usize) -> Result<DiscretizedRoi, RadiomicsError> {
    if bins < 2 {
        return Err(RadiomicsError::BadBins(bins));
    }
    mask.check_matches(image)?;
    let roi = || image.pixels().iter().zip(mask.bits()).filter(|(_, &m)| m).map(|(&p, _)| p as u64);
    let min = roi().min().ok_or(RadiomicsError::EmptyMask)?;
    let max = roi().max().expect("non-empty");
    let range = max - min;
    let bins_eff = if range == 0 { 1 } else { bins };
    let levels = image
        .pixels()
        .iter()
        .zip(mask.bits())
        .map(|(&p, &m)| {
            if !m {
                0
            } else if range == 0 {
                1
            } else {
                let l = (p as u64 - min) * bins as u64 / range + 1;
                l.min(bins as u64) as u16
            }
        })
        .collect();
    Ok(DiscretizedRoi { width: image.width(), height: image.height(), levels, bins: bins_eff })
}
