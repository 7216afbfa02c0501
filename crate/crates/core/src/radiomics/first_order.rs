use super::{entropy_term, DiscretizedRoi, RadiomicsError, RoiMask, FIRST_ORDER_COUNT};
use crate::data::GrayImage;

/// Linear-interpolated percentile of sorted data (`q` in `[0, 100]`).
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// The 18 intensity statistics of the ROI. Entropy and Uniformity use the
/// discretized histogram; everything else uses raw intensities. Variance is
/// the population variance; Kurtosis is not excess-corrected; Skewness and
/// Kurtosis are 0 for a zero-variance ROI.
pub fn first_order_features(
    image: &GrayImage,
    mask: &RoiMask,
    disc: &DiscretizedRoi,
) -> Result<[f64; FIRST_ORDER_COUNT], RadiomicsError> {
    mask.check_matches(image)?;
    let mut x: Vec<f64> = image
        .pixels()
        .iter()
        .zip(mask.bits())
        .filter(|(_, &m)| m)
        .map(|(&p, _)| p as f64)
        .collect();
    if x.is_empty() {
        return Err(RadiomicsError::EmptyMask);
    }
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;

    let energy: f64 = x.iter().map(|v| v * v).sum();
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let (skewness, kurtosis) = if m2 > 0.0 { (m3 / m2.powf(1.5), m4 / (m2 * m2)) } else { (0.0, 0.0) };

    let p10 = percentile(&x, 10.0);
    let p90 = percentile(&x, 90.0);
    let mad = x.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;
    let robust: Vec<f64> = x.iter().copied().filter(|&v| v >= p10 && v <= p90).collect();
    let robust_mean = robust.iter().sum::<f64>() / robust.len() as f64;
    let rmad = robust.iter().map(|v| (v - robust_mean).abs()).sum::<f64>() / robust.len() as f64;

    let mut hist = vec![0usize; disc.bins() + 1];
    for &l in disc.levels().iter().filter(|&&l| l > 0) {
        hist[l as usize] += 1;
    }
    let total = disc.roi_count() as f64;
    let entropy: f64 = hist.iter().map(|&c| entropy_term(c as f64 / total)).sum();
    let uniformity: f64 = hist.iter().map(|&c| (c as f64 / total).powi(2)).sum();

    let min = x[0];
    let max = x[x.len() - 1];
    Ok([
        energy,
        energy, // total energy: unit pixel spacing
        entropy,
        min,
        p10,
        p90,
        max,
        mean,
        percentile(&x, 50.0),
        percentile(&x, 75.0) - percentile(&x, 25.0),
        max - min,
        mad,
        rmad,
        (energy / n).sqrt(),
        skewness,
        kurtosis,
        m2,
        uniformity,
    ])
}
