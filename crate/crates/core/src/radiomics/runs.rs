//! Run-length (GLRLM), size-zone (GLSZM) and dependence (GLDM) matrices.
//!
//! All three share the same layout, gray level by "size" (run length, zone
//! area, dependence count), and the same family of emphasis statistics.

use std::collections::VecDeque;

use super::{
    entropy_term, DiscretizedRoi, GLCM_DIRECTIONS, GLDM_COUNT, GLRLM_COUNT, GLSZM_COUNT, NEIGHBORS_8,
};

/// `levels x max_size` matrix of (possibly fractional) counts; entry
/// `(i, j)` counts elements of gray level `i + 1` and size `j + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeMatrix {
    pub levels: usize,
    pub max_size: usize,
    pub counts: Vec<f64>,
    /// Number of ROI pixels.
    pub np: usize,
}

impl SizeMatrix {
    fn new(levels: usize, max_size: usize, np: usize) -> Self {
        Self { levels, max_size, counts: vec![0.0; levels * max_size], np }
    }

    pub fn get(&self, level: usize, size: usize) -> f64 {
        self.counts[(level - 1) * self.max_size + size - 1]
    }

    fn add(&mut self, level: usize, size: usize, v: f64) {
        self.counts[(level - 1) * self.max_size + size - 1] += v;
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Run-length matrix along one direction; runs end at the ROI boundary.
pub fn glrlm_matrix(disc: &DiscretizedRoi, (dx, dy): (isize, isize)) -> SizeMatrix {
    let mut m = SizeMatrix::new(disc.bins(), disc.width().max(disc.height()), disc.roi_count());
    for y in 0..disc.height() as isize {
        for x in 0..disc.width() as isize {
            let l = disc.level(x, y);
            if l == 0 || disc.level(x - dx, y - dy) == l {
                continue;
            }
            let mut len = 1;
            while disc.level(x + dx * len as isize, y + dy * len as isize) == l {
                len += 1;
            }
            m.add(l as usize, len, 1.0);
        }
    }
    m
}

/// Zones of 8-connected pixels sharing a level.
pub fn glszm_matrix(disc: &DiscretizedRoi) -> SizeMatrix {
    let (w, h) = (disc.width(), disc.height());
    let np = disc.roi_count();
    let mut m = SizeMatrix::new(disc.bins(), np, np);
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        let l = disc.levels()[start];
        if l == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut size = 0;
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let (x, y) = ((idx % w) as isize, (idx / w) as isize);
            for (dx, dy) in NEIGHBORS_8 {
                let (nx, ny) = (x + dx, y + dy);
                if disc.level(nx, ny) == l {
                    let n = ny as usize * w + nx as usize;
                    if !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        m.add(l as usize, size, 1.0);
    }
    m
}

/// Dependence matrix with threshold 0 over the 8-neighbourhood: each ROI
/// pixel contributes one entry of size `1 + #neighbours with equal level`.
pub fn gldm_matrix(disc: &DiscretizedRoi) -> SizeMatrix {
    let mut m = SizeMatrix::new(disc.bins(), NEIGHBORS_8.len() + 1, disc.roi_count());
    for y in 0..disc.height() as isize {
        for x in 0..disc.width() as isize {
            let l = disc.level(x, y);
            if l == 0 {
                continue;
            }
            let dep = NEIGHBORS_8.iter().filter(|(dx, dy)| disc.level(x + dx, y + dy) == l).count();
            m.add(l as usize, dep + 1, 1.0);
        }
    }
    m
}

/// The 16 emphasis statistics, in GLRLM order: small/large size emphasis,
/// gray-level non-uniformity (+normalized), size non-uniformity
/// (+normalized), percentage, gray-level variance, size variance, entropy,
/// low/high gray-level emphasis, then the four mixed emphases.
pub fn size_matrix_features(m: &SizeMatrix) -> [f64; 16] {
    let nr = m.total();
    let lv = |i: usize| (i + 1) as f64;
    let sz = |j: usize| (j + 1) as f64;
    let cell = |i: usize, j: usize| m.counts[i * m.max_size + j];

    let (mut sre, mut lre, mut lgl, mut hgl) = (0.0, 0.0, 0.0, 0.0);
    let (mut srlgl, mut srhgl, mut lrlgl, mut lrhgl) = (0.0, 0.0, 0.0, 0.0);
    let (mut mu_i, mut mu_j, mut entropy) = (0.0, 0.0, 0.0);
    let mut gl_sums = vec![0.0; m.levels];
    let mut size_sums = vec![0.0; m.max_size];
    for i in 0..m.levels {
        for j in 0..m.max_size {
            let v = cell(i, j);
            if v == 0.0 {
                continue;
            }
            let (i2, j2) = (lv(i) * lv(i), sz(j) * sz(j));
            sre += v / j2;
            lre += v * j2;
            lgl += v / i2;
            hgl += v * i2;
            srlgl += v / (i2 * j2);
            srhgl += v * i2 / j2;
            lrlgl += v * j2 / i2;
            lrhgl += v * i2 * j2;
            gl_sums[i] += v;
            size_sums[j] += v;
            let p = v / nr;
            mu_i += p * lv(i);
            mu_j += p * sz(j);
            entropy += entropy_term(p);
        }
    }
    let (mut gl_var, mut size_var) = (0.0, 0.0);
    for i in 0..m.levels {
        for j in 0..m.max_size {
            let p = cell(i, j) / nr;
            gl_var += p * (lv(i) - mu_i).powi(2);
            size_var += p * (sz(j) - mu_j).powi(2);
        }
    }
    let gln: f64 = gl_sums.iter().map(|s| s * s).sum();
    let sn: f64 = size_sums.iter().map(|s| s * s).sum();
    [
        sre / nr,
        lre / nr,
        gln / nr,
        gln / (nr * nr),
        sn / nr,
        sn / (nr * nr),
        nr / m.np as f64,
        gl_var,
        size_var,
        entropy,
        lgl / nr,
        hgl / nr,
        srlgl / nr,
        srhgl / nr,
        lrlgl / nr,
        lrhgl / nr,
    ]
}

/// GLRLM features of the mean of the four directional run-length matrices.
pub fn glrlm_features(disc: &DiscretizedRoi) -> [f64; GLRLM_COUNT] {
    let mats: Vec<SizeMatrix> = GLCM_DIRECTIONS.iter().map(|&d| glrlm_matrix(disc, d)).collect();
    let mut mean = mats[0].clone();
    for (idx, v) in mean.counts.iter_mut().enumerate() {
        *v = mats.iter().map(|m| m.counts[idx]).sum::<f64>() / mats.len() as f64;
    }
    size_matrix_features(&mean)
}

pub fn glszm_features(disc: &DiscretizedRoi) -> [f64; GLSZM_COUNT] {
    size_matrix_features(&glszm_matrix(disc))
}

/// GLDM drops the gray-level non-uniformity normalized and percentage
/// entries (the latter is identically 1).
pub fn gldm_features(disc: &DiscretizedRoi) -> [f64; GLDM_COUNT] {
    let f = size_matrix_features(&gldm_matrix(disc));
    [f[0], f[1], f[2], f[4], f[5], f[7], f[8], f[9], f[10], f[11], f[12], f[13], f[14], f[15]]
}

pub fn run_zone_features(
    disc: &DiscretizedRoi,
) -> ([f64; GLRLM_COUNT], [f64; GLSZM_COUNT], [f64; GLDM_COUNT]) {
    (glrlm_features(disc), glszm_features(disc), gldm_features(disc))
}
