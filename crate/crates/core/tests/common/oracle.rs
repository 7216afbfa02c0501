//! Brute-force reference implementations of the radiomics features.
//!
//! Everything here works from pixel lists and pairwise enumeration, without
//! the library's matrix builders, so agreement is an independent check.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};

use nalgebra::DMatrix;

pub struct Roi {
    pub w: usize,
    pub h: usize,
    /// (x, y, raw intensity, level) for each ROI pixel
    pub px: Vec<(i64, i64, f64, usize)>,
    pub g: usize,
}

impl Roi {
    /// `raw` intensities and a mask; levels by counting bin edges crossed.
    pub fn new(w: usize, h: usize, raw: &[u8], mask: &[bool], bins: usize) -> Roi {
        let vals: Vec<u64> = raw.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v as u64).collect();
        let min = *vals.iter().min().unwrap();
        let max = *vals.iter().max().unwrap();
        let range = max - min;
        let g = if range == 0 { 1 } else { bins };
        let mut px = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if !mask[i] {
                    continue;
                }
                let v = raw[i] as u64;
                let level = if range == 0 {
                    1
                } else {
                    1 + (1..bins as u64).filter(|&k| (v - min) * bins as u64 >= k * range).count()
                };
                px.push((x as i64, y as i64, v as f64, level));
            }
        }
        Roi { w, h, px, g }
    }

    fn level_map(&self) -> HashMap<(i64, i64), usize> {
        self.px.iter().map(|&(x, y, _, l)| ((x, y), l)).collect()
    }

    pub fn levels(&self) -> Vec<usize> {
        self.px.iter().map(|p| p.3).collect()
    }
}

fn h(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

// ------------------------------------------------------------------ shape

pub fn shape(roi: &Roi) -> Vec<f64> {
    let n = roi.px.len() as f64;
    let set: HashSet<(i64, i64)> = roi.px.iter().map(|p| (p.0, p.1)).collect();
    // perimeter = 4 * area - 2 * (shared 4-adjacencies)
    let mut shared = 0;
    for a in &roi.px {
        for b in &roi.px {
            if (a.0 - b.0).abs() + (a.1 - b.1).abs() == 1 {
                shared += 1;
            }
        }
    }
    let perim = 4.0 * n - shared as f64; // each adjacency seen twice
    let _ = set;
    let mut maxd: f64 = 0.0;
    for a in &roi.px {
        for b in &roi.px {
            maxd = maxd.max((((a.0 - b.0).pow(2) + (a.1 - b.1).pow(2)) as f64).sqrt());
        }
    }
    let mx = roi.px.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let my = roi.px.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let mut c = DMatrix::<f64>::zeros(2, 2);
    for p in &roi.px {
        let d = [p.0 as f64 - mx, p.1 as f64 - my];
        for r in 0..2 {
            for k in 0..2 {
                c[(r, k)] += d[r] * d[k] / n;
            }
        }
    }
    let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().map(|v| v.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let elong = if ev[0] > 0.0 { (ev[1] / ev[0]).sqrt() } else { 1.0 };
    vec![
        n,
        n,
        perim,
        perim / n,
        2.0 * (std::f64::consts::PI * n).sqrt() / perim,
        maxd,
        4.0 * ev[0].sqrt(),
        4.0 * ev[1].sqrt(),
        elong,
    ]
}

// ------------------------------------------------------------ first order

fn numpy_percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q / 100.0 * (sorted.len() as f64 - 1.0);
    let below = sorted[rank.floor() as usize];
    let above = sorted[rank.ceil() as usize];
    below + (above - below) * (rank - rank.floor())
}

pub fn first_order(roi: &Roi) -> Vec<f64> {
    let mut x: Vec<f64> = roi.px.iter().map(|p| p.2).collect();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = x.len() as f64;
    let mut energy = 0.0;
    let mut total = 0.0;
    for v in &x {
        energy += v * v;
        total += v;
    }
    let mean = total / n;
    let mut m = [0.0; 5];
    for v in &x {
        for k in 2..5 {
            m[k] += (v - mean).powi(k as i32) / n;
        }
    }
    let skew = if m[2] == 0.0 { 0.0 } else { m[3] / m[2].powf(1.5) };
    let kurt = if m[2] == 0.0 { 0.0 } else { m[4] / m[2].powi(2) };
    let p10 = numpy_percentile(&x, 10.0);
    let p90 = numpy_percentile(&x, 90.0);
    let mad = x.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;
    let mid: Vec<f64> = x.iter().cloned().filter(|v| *v >= p10 && *v <= p90).collect();
    let mm = mid.iter().sum::<f64>() / mid.len() as f64;
    let rmad = mid.iter().map(|v| (v - mm).abs()).sum::<f64>() / mid.len() as f64;
    let mut hist: BTreeMap<usize, f64> = BTreeMap::new();
    for p in &roi.px {
        *hist.entry(p.3).or_default() += 1.0 / n;
    }
    let entropy: f64 = hist.values().map(|&p| h(p)).sum();
    let unif: f64 = hist.values().map(|p| p * p).sum();
    vec![
        energy,
        energy,
        entropy,
        x[0],
        p10,
        p90,
        x[x.len() - 1],
        mean,
        numpy_percentile(&x, 50.0),
        numpy_percentile(&x, 75.0) - numpy_percentile(&x, 25.0),
        x[x.len() - 1] - x[0],
        mad,
        rmad,
        (energy / n).sqrt(),
        skew,
        kurt,
        m[2],
        unif,
    ]
}

// ------------------------------------------------------------------- GLCM

const DIRS: [(i64, i64); 4] = [(1, 0), (1, -1), (0, 1), (1, 1)];

/// Pair enumeration over all ROI pixel pairs; returns the mean of the
/// per-direction normalized symmetric matrices as a dense `g x g` map.
pub fn glcm_matrix(roi: &Roi) -> Vec<Vec<f64>> {
    let g = roi.g;
    let mut mats = Vec::new();
    for (dx, dy) in DIRS {
        let mut m = vec![vec![0.0; g]; g];
        let mut total = 0.0;
        for a in &roi.px {
            for b in &roi.px {
                let (ox, oy) = (b.0 - a.0, b.1 - a.1);
                if (ox == dx && oy == dy) || (ox == -dx && oy == -dy) {
                    m[a.3 - 1][b.3 - 1] += 1.0;
                    total += 1.0;
                }
            }
        }
        if total > 0.0 {
            for row in m.iter_mut() {
                for v in row.iter_mut() {
                    *v /= total;
                }
            }
            mats.push(m);
        }
    }
    if mats.is_empty() {
        let mut m = vec![vec![0.0; g]; g];
        let l = roi.px[0].3;
        m[l - 1][l - 1] = 1.0;
        return m;
    }
    let k = mats.len() as f64;
    (0..g).map(|i| (0..g).map(|j| mats.iter().map(|m| m[i][j]).sum::<f64>() / k).collect()).collect()
}

pub fn glcm(roi: &Roi) -> Vec<f64> {
    let p = glcm_matrix(roi);
    let g = roi.g;
    let cells: Vec<(f64, f64, f64)> = (0..g)
        .flat_map(|i| (0..g).map(move |j| (i, j)))
        .map(|(i, j)| ((i + 1) as f64, (j + 1) as f64, p[i][j]))
        .collect();
    let px = |i: f64| cells.iter().filter(|c| c.0 == i).map(|c| c.2).sum::<f64>();
    let py = |j: f64| cells.iter().filter(|c| c.1 == j).map(|c| c.2).sum::<f64>();
    let ux: f64 = cells.iter().map(|c| c.0 * c.2).sum();
    let uy: f64 = cells.iter().map(|c| c.1 * c.2).sum();
    let vx: f64 = cells.iter().map(|c| (c.0 - ux).powi(2) * c.2).sum();
    let vy: f64 = cells.iter().map(|c| (c.1 - uy).powi(2) * c.2).sum();
    let autoc: f64 = cells.iter().map(|c| c.0 * c.1 * c.2).sum();
    let cp: f64 = cells.iter().map(|c| (c.0 + c.1 - ux - uy).powi(4) * c.2).sum();
    let cs: f64 = cells.iter().map(|c| (c.0 + c.1 - ux - uy).powi(3) * c.2).sum();
    let ct: f64 = cells.iter().map(|c| (c.0 + c.1 - ux - uy).powi(2) * c.2).sum();
    let contrast: f64 = cells.iter().map(|c| (c.0 - c.1).powi(2) * c.2).sum();
    let corr = if vx * vy > 0.0 { (autoc - ux * uy) / (vx.sqrt() * vy.sqrt()) } else { 1.0 };
    let mut pd: BTreeMap<i64, f64> = BTreeMap::new();
    let mut ps: BTreeMap<i64, f64> = BTreeMap::new();
    for c in &cells {
        *pd.entry((c.0 - c.1).abs() as i64).or_default() += c.2;
        *ps.entry((c.0 + c.1) as i64).or_default() += c.2;
    }
    let da: f64 = pd.iter().map(|(k, v)| *k as f64 * v).sum();
    let de: f64 = pd.values().map(|&v| h(v)).sum();
    let dv: f64 = pd.iter().map(|(k, v)| (*k as f64 - da).powi(2) * v).sum();
    let je: f64 = cells.iter().map(|c| c.2 * c.2).sum();
    let hxy: f64 = cells.iter().map(|c| h(c.2)).sum();
    let hx: f64 = (1..=g).map(|i| h(px(i as f64))).sum();
    let hy: f64 = (1..=g).map(|j| h(py(j as f64))).sum();
    let mut hxy1 = 0.0;
    let mut hxy2 = 0.0;
    for c in &cells {
        let q = px(c.0) * py(c.1);
        if q > 0.0 {
            hxy1 += -c.2 * q.log2();
            hxy2 += -q * q.log2();
        }
    }
    let imc1 = if hx.max(hy) > 0.0 { (hxy - hxy1) / hx.max(hy) } else { 0.0 };
    let imc2 = if hxy2 > hxy { (1.0 - (-2.0 * (hxy2 - hxy)).exp()).sqrt() } else { 0.0 };
    let gf = g as f64;
    let idm: f64 = cells.iter().map(|c| c.2 / (1.0 + (c.0 - c.1).powi(2))).sum();
    let idmn: f64 = cells.iter().map(|c| c.2 / (1.0 + (c.0 - c.1).powi(2) / (gf * gf))).sum();
    let id: f64 = cells.iter().map(|c| c.2 / (1.0 + (c.0 - c.1).abs())).sum();
    let idn: f64 = cells.iter().map(|c| c.2 / (1.0 + (c.0 - c.1).abs() / gf)).sum();
    let iv: f64 = cells.iter().filter(|c| c.0 != c.1).map(|c| c.2 / (c.0 - c.1).powi(2)).sum();
    let mp = cells.iter().map(|c| c.2).fold(0.0, f64::max);
    let sa: f64 = ps.iter().map(|(k, v)| *k as f64 * v).sum();
    let se: f64 = ps.values().map(|&v| h(v)).sum();
    let ss: f64 = cells.iter().map(|c| (c.0 - ux).powi(2) * c.2).sum();

    // MCC from the non-symmetric Q matrix via a general (Schur) eigensolver
    let present: Vec<usize> = (0..g).filter(|&i| px((i + 1) as f64) > 0.0).collect();
    let mcc = if present.len() < 2 {
        1.0
    } else {
        let n = present.len();
        let q = DMatrix::from_fn(n, n, |r, c| {
            let (i, j) = (present[r], present[c]);
            (0..g)
                .filter(|&k| py((k + 1) as f64) > 0.0)
                .map(|k| p[i][k] * p[j][k] / (px((i + 1) as f64) * py((k + 1) as f64)))
                .sum::<f64>()
        });
        let mut ev: Vec<f64> = q.complex_eigenvalues().iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev[1].max(0.0).sqrt()
    };

    vec![
        autoc, ux, cp, cs, ct, contrast, corr, da, de, dv, je, hxy, imc1, imc2, idm, idmn, id, idn, iv, mp, sa,
        se, ss, mcc,
    ]
}

// ------------------------------------------------- run / zone / dependence

/// Emphasis statistics from a list of (level, size, weight) entries.
fn emphasis(entries: &[(usize, usize, f64)], np: f64) -> Vec<f64> {
    let nr: f64 = entries.iter().map(|e| e.2).sum();
    let mut by_level: BTreeMap<usize, f64> = BTreeMap::new();
    let mut by_size: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cell: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(l, s, w) in entries {
        *by_level.entry(l).or_default() += w;
        *by_size.entry(s).or_default() += w;
        *cell.entry((l, s)).or_default() += w;
    }
    let avg = |f: &dyn Fn(f64, f64) -> f64| -> f64 {
        entries.iter().map(|&(l, s, w)| w * f(l as f64, s as f64)).sum::<f64>() / nr
    };
    let mu_l = avg(&|l, _| l);
    let mu_s = avg(&|_, s| s);
    let gln: f64 = by_level.values().map(|v| v * v).sum();
    let sn: f64 = by_size.values().map(|v| v * v).sum();
    let ent: f64 = cell.values().map(|&v| h(v / nr)).sum();
    vec![
        avg(&|_, s| 1.0 / (s * s)),
        avg(&|_, s| s * s),
        gln / nr,
        gln / (nr * nr),
        sn / nr,
        sn / (nr * nr),
        nr / np,
        avg(&|l, _| (l - mu_l).powi(2)),
        avg(&|_, s| (s - mu_s).powi(2)),
        ent,
        avg(&|l, _| 1.0 / (l * l)),
        avg(&|l, _| l * l),
        avg(&|l, s| 1.0 / (l * l * s * s)),
        avg(&|l, s| l * l / (s * s)),
        avg(&|l, s| s * s / (l * l)),
        avg(&|l, s| l * l * s * s),
    ]
}

/// Runs found by walking each pixel back to its run start and forward to
/// its end; duplicates collapse in a set keyed by start pixel.
pub fn glrlm(roi: &Roi) -> Vec<f64> {
    let map = roi.level_map();
    let mut entries = Vec::new();
    for (dx, dy) in DIRS {
        let mut runs: HashSet<((i64, i64), usize, usize)> = HashSet::new();
        for &(x, y, _, l) in &roi.px {
            let (mut sx, mut sy) = (x, y);
            while map.get(&(sx - dx, sy - dy)) == Some(&l) {
                sx -= dx;
                sy -= dy;
            }
            let mut len = 0;
            while map.get(&(sx + dx * len as i64, sy + dy * len as i64)) == Some(&l) {
                len += 1;
            }
            runs.insert(((sx, sy), l, len));
        }
        entries.extend(runs.into_iter().map(|(_, l, len)| (l, len, 0.25)));
    }
    emphasis(&entries, roi.px.len() as f64)
}

/// Zones via union-find over all pixel pairs within Chebyshev distance 1.
pub fn glszm(roi: &Roi) -> Vec<f64> {
    let n = roi.px.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for a in 0..n {
        for b in 0..n {
            let (pa, pb) = (roi.px[a], roi.px[b]);
            if a != b && pa.3 == pb.3 && (pa.0 - pb.0).abs() <= 1 && (pa.1 - pb.1).abs() <= 1 {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    let mut zones: HashMap<usize, (usize, usize)> = HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        let e = zones.entry(r).or_insert((roi.px[i].3, 0));
        e.1 += 1;
    }
    let entries: Vec<(usize, usize, f64)> = zones.values().map(|&(l, s)| (l, s, 1.0)).collect();
    emphasis(&entries, n as f64)
}

pub fn gldm(roi: &Roi) -> Vec<f64> {
    let entries: Vec<(usize, usize, f64)> = roi
        .px
        .iter()
        .map(|a| {
            let dep = roi
                .px
                .iter()
                .filter(|b| (a.0, a.1) != (b.0, b.1) && (a.0 - b.0).abs() <= 1 && (a.1 - b.1).abs() <= 1 && a.3 == b.3)
                .count();
            (a.3, dep + 1, 1.0)
        })
        .collect();
    let f = emphasis(&entries, roi.px.len() as f64);
    [0, 1, 2, 4, 5, 7, 8, 9, 10, 11, 12, 13, 14, 15].iter().map(|&i| f[i]).collect()
}

pub fn ngtdm(roi: &Roi) -> Vec<f64> {
    let mut s: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cnt: BTreeMap<usize, f64> = BTreeMap::new();
    for a in &roi.px {
        let nb: Vec<f64> = roi
            .px
            .iter()
            .filter(|b| (a.0, a.1) != (b.0, b.1) && (a.0 - b.0).abs() <= 1 && (a.1 - b.1).abs() <= 1)
            .map(|b| b.3 as f64)
            .collect();
        if nb.is_empty() {
            continue;
        }
        let avg = nb.iter().sum::<f64>() / nb.len() as f64;
        *s.entry(a.3).or_default() += (a.3 as f64 - avg).abs();
        *cnt.entry(a.3).or_default() += 1.0;
    }
    let nvp: f64 = cnt.values().sum();
    if nvp == 0.0 {
        return vec![1e12, 0.0, 0.0, 0.0, 0.0];
    }
    let lv: Vec<(f64, f64, f64)> = cnt.iter().map(|(&l, &c)| (l as f64, c / nvp, s[&l])).collect();
    let ngp = lv.len() as f64;
    let ps: f64 = lv.iter().map(|t| t.1 * t.2).sum();
    let stot: f64 = lv.iter().map(|t| t.2).sum();
    let coarse = if ps < 1e-12 { 1e12 } else { 1.0 / ps };
    let mut c1 = 0.0;
    let mut bd = 0.0;
    let mut cx = 0.0;
    let mut st = 0.0;
    for a in &lv {
        for b in &lv {
            c1 += a.1 * b.1 * (a.0 - b.0).powi(2);
            bd += (a.0 * a.1 - b.0 * b.1).abs();
            cx += (a.0 - b.0).abs() * (a.1 * a.2 + b.1 * b.2) / (a.1 + b.1);
            st += (a.1 + b.1) * (a.0 - b.0).powi(2);
        }
    }
    vec![
        coarse,
        if ngp > 1.0 { c1 / (ngp * (ngp - 1.0)) * stot / nvp } else { 0.0 },
        if bd > 0.0 { ps / bd } else { 0.0 },
        cx / nvp,
        if stot > 0.0 { st / stot } else { 0.0 },
    ]
}

/// Full 102-vector in schema order.
pub fn all_features(roi: &Roi) -> Vec<f64> {
    let mut v = shape(roi);
    v.extend(first_order(roi));
    v.extend(glcm(roi));
    v.extend(glrlm(roi));
    v.extend(glszm(roi));
    v.extend(ngtdm(roi));
    v.extend(gldm(roi));
    v
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}
