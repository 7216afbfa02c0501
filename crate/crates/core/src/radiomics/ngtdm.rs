use super::{DiscretizedRoi, EPSILON, NEIGHBORS_8, NGTDM_COUNT};

/// Per-level neighbourhood gray-tone difference sums `s_i` and counts `n_i`
/// (index 0 unused). Pixels without any ROI neighbour are skipped.
pub(crate) fn ngtdm_table(disc: &DiscretizedRoi) -> (Vec<f64>, Vec<f64>) {
    let g = disc.bins();
    let mut s = vec![0.0; g + 1];
    let mut n = vec![0.0; g + 1];
    for y in 0..disc.height() as isize {
        for x in 0..disc.width() as isize {
            let l = disc.level(x, y);
            if l == 0 {
                continue;
            }
            let (mut sum, mut count) = (0.0, 0u32);
            for (dx, dy) in NEIGHBORS_8 {
                let nl = disc.level(x + dx, y + dy);
                if nl > 0 {
                    sum += nl as f64;
                    count += 1;
                }
            }
            if count > 0 {
                s[l as usize] += (l as f64 - sum / count as f64).abs();
                n[l as usize] += 1.0;
            }
        }
    }
    (s, n)
}

/// Coarseness, Contrast, Busyness, Complexity, Strength.
pub fn ngtdm_features(disc: &DiscretizedRoi) -> [f64; NGTDM_COUNT] {
    let (s, n) = ngtdm_table(disc);
    let nvp: f64 = n.iter().sum();
    if nvp == 0.0 {
        return [1.0 / EPSILON, 0.0, 0.0, 0.0, 0.0];
    }
    let p: Vec<f64> = n.iter().map(|&c| c / nvp).collect();
    let present: Vec<usize> = (1..p.len()).filter(|&i| p[i] > 0.0).collect();
    let ngp = present.len() as f64;

    let ps: f64 = present.iter().map(|&i| p[i] * s[i]).sum();
    let s_total: f64 = s.iter().sum();
    let coarseness = if ps < EPSILON { 1.0 / EPSILON } else { 1.0 / ps };

    let (mut pair_contrast, mut busy_denom, mut complexity, mut strength) = (0.0, 0.0, 0.0, 0.0);
    for &i in &present {
        for &j in &present {
            let (fi, fj) = (i as f64, j as f64);
            pair_contrast += p[i] * p[j] * (fi - fj).powi(2);
            busy_denom += (fi * p[i] - fj * p[j]).abs();
            complexity += (fi - fj).abs() * (p[i] * s[i] + p[j] * s[j]) / (p[i] + p[j]);
            strength += (p[i] + p[j]) * (fi - fj).powi(2);
        }
    }
    let contrast = if ngp > 1.0 { pair_contrast / (ngp * (ngp - 1.0)) * s_total / nvp } else { 0.0 };
    let busyness = if busy_denom > 0.0 { ps / busy_denom } else { 0.0 };
    let strength = if s_total > 0.0 { strength / s_total } else { 0.0 };
    [coarseness, contrast, busyness, complexity / nvp, strength]
}
