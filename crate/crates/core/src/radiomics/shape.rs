use super::{RadiomicsError, RoiMask, SHAPE_COUNT};

/// 2-D shape descriptors in pixel units (unit spacing).
///
/// Perimeter counts pixel edges shared with non-ROI pixels or the image
/// border. Axis lengths are `4 sqrt(lambda)` of the population covariance of
/// pixel-centre coordinates.
pub fn shape2d_features(mask: &RoiMask) -> Result<[f64; SHAPE_COUNT], RadiomicsError> {
    let mut area = 0usize;
    let mut perimeter = 0usize;
    let mut boundary: Vec<(f64, f64)> = Vec::new();
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for y in 0..mask.height() as isize {
        for x in 0..mask.width() as isize {
            if !mask.contains(x, y) {
                continue;
            }
            area += 1;
            sx += x as f64;
            sy += y as f64;
            let exposed = [(-1, 0), (1, 0), (0, -1), (0, 1)]
                .iter()
                .filter(|(dx, dy)| !mask.contains(x + dx, y + dy))
                .count();
            perimeter += exposed;
            if exposed > 0 {
                boundary.push((x as f64, y as f64));
            }
        }
    }
    if area == 0 {
        return Err(RadiomicsError::EmptyMask);
    }
    let n = area as f64;
    let (mx, my) = (sx / n, sy / n);
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for y in 0..mask.height() as isize {
        for x in 0..mask.width() as isize {
            if mask.contains(x, y) {
                let (dx, dy) = (x as f64 - mx, y as f64 - my);
                cxx += dx * dx;
                cyy += dy * dy;
                cxy += dx * dy;
            }
        }
    }
    let (cxx, cyy, cxy) = (cxx / n, cyy / n, cxy / n);
    let half_trace = (cxx + cyy) / 2.0;
    let disc = (((cxx - cyy) / 2.0).powi(2) + cxy * cxy).sqrt();
    let major = (half_trace + disc).max(0.0);
    let minor = (half_trace - disc).max(0.0);
    let elongation = if major > 0.0 { (minor / major).sqrt() } else { 1.0 };

    // The farthest pair of pixel centres lies on the convex hull, whose
    // vertices are all boundary pixels.
    let mut max_d2 = 0.0f64;
    for (i, a) in boundary.iter().enumerate() {
        for b in &boundary[i + 1..] {
            max_d2 = max_d2.max((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2));
        }
    }

    let p = perimeter as f64;
    Ok([
        n,
        n,
        p,
        p / n,
        2.0 * (std::f64::consts::PI * n).sqrt() / p,
        max_d2.sqrt(),
        4.0 * major.sqrt(),
        4.0 * minor.sqrt(),
        elongation,
    ])
}
