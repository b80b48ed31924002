//! Independent reference implementations used as test oracles.
//!
//! Everything here is deliberately naive and shares no code with the crate.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::PI;

/// Minimal accumulated squared cost over every admissible warping path,
/// found by exhaustive enumeration. Paths may start at `(0, j)` or `(i, 0)`
/// with `i, j ≤ psi` and end at `(nx−1, j)` or `(i, ny−1)` within `psi` of
/// the corner; steps are `(1,0)`, `(0,1)` or `(1,1)`.
pub fn brute_force_dtw_sq(x: &[f64], y: &[f64], psi: usize) -> f64 {
    let (nx, ny) = (x.len(), y.len());
    let is_end = |i: usize, j: usize| (i == nx - 1 && j + psi >= ny - 1) || (j == ny - 1 && i + psi >= nx - 1);
    let mut starts = BTreeSet::new();
    for s in 0..=psi {
        if s < nx {
            starts.insert((s, 0));
        }
        if s < ny {
            starts.insert((0, s));
        }
    }
    let mut best = f64::INFINITY;
    fn walk(
        x: &[f64],
        y: &[f64],
        i: usize,
        j: usize,
        acc: f64,
        best: &mut f64,
        is_end: &dyn Fn(usize, usize) -> bool,
    ) {
        let d = x[i] - y[j];
        let acc = acc + d * d;
        if is_end(i, j) && acc < *best {
            *best = acc;
        }
        for (di, dj) in [(1, 0), (0, 1), (1, 1)] {
            if i + di < x.len() && j + dj < y.len() {
                walk(x, y, i + di, j + dj, acc, best, is_end);
            }
        }
    }
    for (i, j) in starts {
        walk(x, y, i, j, 0.0, &mut best, &is_end);
    }
    best
}

/// Single-sided amplitude spectrum by the direct Fourier sum.
pub fn naive_dft_amplitudes(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let angle = 2.0 * PI * (k * t % n) as f64 / n as f64;
                re += v * angle.cos();
                im -= v * angle.sin();
            }
            let mag = (re * re + im * im).sqrt();
            let edge = k == 0 || (n.is_multiple_of(2) && k == n / 2);
            if edge {
                mag / n as f64
            } else {
                2.0 * mag / n as f64
            }
        })
        .collect()
}

/// Percentile with linear interpolation between closest ranks.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * p / 100.0;
    let below = h as usize;
    let above = usize::min(below + 1, v.len() - 1);
    v[below] * (1.0 - (h - below as f64)) + v[above] * (h - below as f64)
}

/// Linear interpolation of `x` (sampled at integer positions) at `pos`.
pub fn lerp_at(x: &[f64], pos: f64) -> f64 {
    let left = pos.floor() as usize;
    if left + 1 >= x.len() {
        return x[x.len() - 1];
    }
    let w = pos - left as f64;
    (1.0 - w) * x[left] + w * x[left + 1]
}

/// Textbook two-pass Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleLinkage {
    Single,
    Complete,
    Average,
}

/// One merge of the brute-force agglomerator: member sets and height.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMerge {
    pub left: BTreeSet<usize>,
    pub right: BTreeSet<usize>,
    pub height: f64,
}

/// Agglomeration that recomputes every inter-cluster linkage from the raw
/// matrix at each step. Ties go to the pair whose smallest members compare
/// lexicographically smallest.
pub fn brute_force_agglomerate(d: &[Vec<f64>], linkage: OracleLinkage) -> Vec<OracleMerge> {
    let mut clusters: Vec<BTreeSet<usize>> = (0..d.len()).map(|i| BTreeSet::from([i])).collect();
    let mut merges = Vec::new();
    let link = |a: &BTreeSet<usize>, b: &BTreeSet<usize>| {
        let pairs: Vec<f64> = a.iter().flat_map(|&i| b.iter().map(move |&j| d[i][j])).collect();
        match linkage {
            OracleLinkage::Single => pairs.iter().copied().fold(f64::INFINITY, f64::min),
            OracleLinkage::Complete => pairs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            OracleLinkage::Average => pairs.iter().sum::<f64>() / pairs.len() as f64,
        }
    };
    while clusters.len() > 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let h = link(&clusters[a], &clusters[b]);
                let ka = *clusters[a].first().unwrap();
                let kb = *clusters[b].first().unwrap();
                let key = (ka.min(kb), ka.max(kb));
                let better = match best {
                    None => true,
                    Some((bh, bkey, _, _)) => h < bh || (h == bh && key < bkey),
                };
                if better {
                    best = Some((h, key, a, b));
                }
            }
        }
        let (height, _, a, b) = best.unwrap();
        let right = clusters.remove(b);
        let left = clusters.remove(a);
        merges.push(OracleMerge { left: left.clone(), right: right.clone(), height });
        clusters.push(left.union(&right).copied().collect());
    }
    merges
}

/// Dendrogrammic distance from a brute-force merge list.
pub fn oracle_cophenetic(n: usize, merges: &[OracleMerge]) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; n]; n];
    for m in merges {
        for &a in &m.left {
            for &b in &m.right {
                t[a][b] = m.height;
                t[b][a] = m.height;
            }
        }
    }
    t
}

/// Pearson correlation of the upper triangles of two square matrices.
pub fn upper_triangle_pearson(d: &[Vec<f64>], t: &[Vec<f64>]) -> f64 {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..d.len() {
        for j in i + 1..d.len() {
            a.push(d[i][j]);
            b.push(t[i][j]);
        }
    }
    pearson(&a, &b)
}

/// Symmetric matrix of absolute differences between 1-D positions.
pub fn line_distances(points: &[f64]) -> Vec<Vec<f64>> {
    points.iter().map(|a| points.iter().map(|b| (a - b).abs()).collect()).collect()
}

/// Two-blob distance matrix: intra-blob distances in `[0.1, 1]`, inter-blob
/// distances in `[10, 20]`, from a small deterministic LCG.
pub fn two_blob_matrix(sizes: (usize, usize), seed: u64) -> Vec<Vec<f64>> {
    let n = sizes.0 + sizes.1;
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let same = (i < sizes.0) == (j < sizes.0);
            let v = if same { 0.1 + 0.9 * next() } else { 10.0 + 10.0 * next() };
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Machine ids `m00`, `m01`, ….
pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("m{i:02}")).collect()
}

/// Naive confusion count: (tp, fp, fn, tn).
pub fn count_confusion(pred: &[bool], truth: &[bool]) -> (u64, u64, u64, u64) {
    let mut c = (0, 0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.0 += 1,
            (true, false) => c.1 += 1,
            (false, true) => c.2 += 1,
            (false, false) => c.3 += 1,
        }
    }
    c
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut points: Vec<f64> = a.iter().chain(&b).copied().collect();
    points.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let cdf = |s: &[f64], v: f64| s.iter().filter(|&&u| u <= v).count() as f64 / s.len() as f64;
    points.iter().map(|&v| (cdf(&a, v) - cdf(&b, v)).abs()).fold(0.0, f64::max)
}
