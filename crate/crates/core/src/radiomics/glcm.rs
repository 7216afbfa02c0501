use nalgebra::DMatrix;

use super::{entropy_term, DiscretizedRoi, GLCM_COUNT};

/// Pixel offsets `(dx, dy)` for 0, 45, 90 and 135 degrees at distance 1.
pub const GLCM_DIRECTIONS: [(isize, isize); 4] = [(1, 0), (1, -1), (0, 1), (1, 1)];

/// Symmetric, normalized co-occurrence matrix (`G x G`, row-major) for one
/// offset, or `None` when no ROI pixel pair exists along it.
pub fn glcm_matrix(disc: &DiscretizedRoi, (dx, dy): (isize, isize)) -> Option<Vec<f64>> {
    let g = disc.bins();
    let mut counts = vec![0u64; g * g];
    let mut total = 0u64;
    for y in 0..disc.height() as isize {
        for x in 0..disc.width() as isize {
            let a = disc.level(x, y);
            let b = disc.level(x + dx, y + dy);
            if a == 0 || b == 0 {
                continue;
            }
            let (i, j) = (a as usize - 1, b as usize - 1);
            counts[i * g + j] += 1;
            counts[j * g + i] += 1;
            total += 2;
        }
    }
    (total > 0).then(|| counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Features of the equally weighted mean of the per-direction matrices.
pub fn glcm_features(disc: &DiscretizedRoi) -> [f64; GLCM_COUNT] {
    let g = disc.bins();
    let mats: Vec<Vec<f64>> = GLCM_DIRECTIONS.iter().filter_map(|&d| glcm_matrix(disc, d)).collect();
    let p = if mats.is_empty() {
        // No pixel pairs: single-entry matrix on the ROI's level.
        let level = disc.levels().iter().copied().find(|&l| l > 0).expect("non-empty ROI") as usize;
        let mut p = vec![0.0; g * g];
        p[(level - 1) * g + level - 1] = 1.0;
        p
    } else {
        let k = mats.len() as f64;
        (0..g * g).map(|idx| mats.iter().map(|m| m[idx]).sum::<f64>() / k).collect()
    };
    glcm_features_from_matrix(&p, g)
}

/// The 24 GLCM features of a normalized `ng x ng` matrix with levels
/// `1..=ng`.
pub fn glcm_features_from_matrix(p: &[f64], ng: usize) -> [f64; GLCM_COUNT] {
    assert_eq!(p.len(), ng * ng);
    let at = |i: usize, j: usize| p[i * ng + j];
    let lv = |i: usize| (i + 1) as f64;

    let px: Vec<f64> = (0..ng).map(|i| (0..ng).map(|j| at(i, j)).sum()).collect();
    let py: Vec<f64> = (0..ng).map(|j| (0..ng).map(|i| at(i, j)).sum()).collect();
    let ux: f64 = (0..ng).map(|i| lv(i) * px[i]).sum();
    let uy: f64 = (0..ng).map(|j| lv(j) * py[j]).sum();
    let sx = (0..ng).map(|i| (lv(i) - ux).powi(2) * px[i]).sum::<f64>().sqrt();
    let sy = (0..ng).map(|j| (lv(j) - uy).powi(2) * py[j]).sum::<f64>().sqrt();

    // p_{x+y}(k) for k = 2..=2ng stored at k-2; p_{x-y}(k) for k = 0..ng.
    let mut p_sum = vec![0.0; 2 * ng - 1];
    let mut p_diff = vec![0.0; ng];
    let mut autocorr = 0.0;
    let (mut prominence, mut shade, mut tendency) = (0.0, 0.0, 0.0);
    let (mut contrast, mut energy, mut hxy, mut hxy1, mut hxy2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut sum_squares = 0.0;
    let mut max_p = 0.0f64;
    for i in 0..ng {
        for j in 0..ng {
            let v = at(i, j);
            p_sum[i + j] += v;
            p_diff[i.abs_diff(j)] += v;
            let c = lv(i) + lv(j) - ux - uy;
            autocorr += v * lv(i) * lv(j);
            prominence += c.powi(4) * v;
            shade += c.powi(3) * v;
            tendency += c * c * v;
            contrast += (lv(i) - lv(j)).powi(2) * v;
            energy += v * v;
            hxy += entropy_term(v);
            let pxy = px[i] * py[j];
            if pxy > 0.0 {
                hxy1 -= v * pxy.log2();
                hxy2 -= pxy * pxy.log2();
            }
            sum_squares += (lv(i) - ux).powi(2) * v;
            max_p = max_p.max(v);
        }
    }
    let hx: f64 = px.iter().map(|&v| entropy_term(v)).sum();
    let hy: f64 = py.iter().map(|&v| entropy_term(v)).sum();

    let correlation = if sx * sy > 0.0 { (autocorr - ux * uy) / (sx * sy) } else { 1.0 };
    let diff_avg: f64 = p_diff.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let diff_entropy: f64 = p_diff.iter().map(|&v| entropy_term(v)).sum();
    let diff_var: f64 = p_diff.iter().enumerate().map(|(k, v)| (k as f64 - diff_avg).powi(2) * v).sum();
    let imc_norm = hx.max(hy);
    let imc1 = if imc_norm > 0.0 { (hxy - hxy1) / imc_norm } else { 0.0 };
    let imc2 = if hxy2 > hxy { (1.0 - (-2.0 * (hxy2 - hxy)).exp()).sqrt() } else { 0.0 };
    let ngf = ng as f64;
    let (mut idm, mut idmn, mut id, mut idn, mut inv_var) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, &v) in p_diff.iter().enumerate() {
        let k = k as f64;
        idm += v / (1.0 + k * k);
        idmn += v / (1.0 + k * k / (ngf * ngf));
        id += v / (1.0 + k);
        idn += v / (1.0 + k / ngf);
        if k > 0.0 {
            inv_var += v / (k * k);
        }
    }
    let sum_avg: f64 = p_sum.iter().enumerate().map(|(k, v)| (k + 2) as f64 * v).sum();
    let sum_entropy: f64 = p_sum.iter().map(|&v| entropy_term(v)).sum();

    [
        autocorr,
        ux,
        prominence,
        shade,
        tendency,
        contrast,
        correlation,
        diff_avg,
        diff_entropy,
        diff_var,
        energy,
        hxy,
        imc1,
        imc2,
        idm,
        idmn,
        id,
        idn,
        inv_var,
        max_p,
        sum_avg,
        sum_entropy,
        sum_squares,
        mcc(p, &px, ng),
    ]
}

/// Maximal correlation coefficient: square root of the second largest
/// eigenvalue of `Q = D^-1 P D^-1 P`. For symmetric `P`, `Q` is similar to
/// `A^2` with `A = D^-1/2 P D^-1/2`, so the symmetric solver suffices.
fn mcc(p: &[f64], px: &[f64], ng: usize) -> f64 {
    let present: Vec<usize> = (0..ng).filter(|&i| px[i] > 0.0).collect();
    let n = present.len();
    if n < 2 {
        return 1.0;
    }
    let a = DMatrix::from_fn(n, n, |r, c| {
        let (i, j) = (present[r], present[c]);
        p[i * ng + j] / (px[i] * px[j]).sqrt()
    });
    let mut squared: Vec<f64> = a.symmetric_eigenvalues().iter().map(|l| l * l).collect();
    squared.sort_by(|a, b| b.total_cmp(a));
    squared[1].max(0.0).sqrt()
}
