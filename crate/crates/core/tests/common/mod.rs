//! Brute-force reference implementations. Each one follows the textbook
//! definition with plain loops and full sorts and shares no code with the
//! library beyond the `Point3` alias.

#![allow(dead_code, clippy::needless_range_loop, clippy::too_many_arguments)]

use pointbank::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform points in [-1, 1]^3, or on a small integer lattice when
/// `lattice` is set so that exact distance ties occur.
pub fn random_points(rng: &mut ChaCha8Rng, n: usize, lattice: bool) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            if lattice {
                [0, 1, 2].map(|_| rng.random_range(-3i32..=3) as f64)
            } else {
                [0, 1, 2].map(|_| rng.random_range(-1.0..1.0))
            }
        })
        .collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn sq(a: &Point3, b: &Point3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s
}

fn lex_less(a: &Point3, b: &Point3) -> bool {
    for i in 0..3 {
        if a[i] != b[i] {
            return a[i] < b[i];
        }
    }
    false
}

/// Index of the candidate with the largest score; ties go to the
/// lexicographically smallest point, then the smallest index.
fn best_of(points: &[Point3], cands: &[(usize, f64)]) -> usize {
    let mut order: Vec<&(usize, f64)> = cands.iter().collect();
    order.sort_by(|x, y| {
        y.1.partial_cmp(&x.1)
            .unwrap()
            .then_with(|| {
                if lex_less(&points[x.0], &points[y.0]) {
                    std::cmp::Ordering::Less
                } else if lex_less(&points[y.0], &points[x.0]) {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Equal
                }
            })
            .then(x.0.cmp(&y.0))
    });
    order[0].0
}

pub fn fps_oracle(points: &[Point3], n: usize) -> Vec<usize> {
    let mut centroid = [0.0; 3];
    for p in points {
        for a in 0..3 {
            centroid[a] += p[a];
        }
    }
    for c in &mut centroid {
        *c /= points.len() as f64;
    }
    let first: Vec<(usize, f64)> = points.iter().enumerate().map(|(i, p)| (i, sq(p, &centroid))).collect();
    let mut selected = vec![best_of(points, &first)];
    while selected.len() < n {
        let cands: Vec<(usize, f64)> = (0..points.len())
            .filter(|i| !selected.contains(i))
            .map(|i| {
                let d = selected
                    .iter()
                    .map(|&s| sq(&points[i], &points[s]))
                    .fold(f64::INFINITY, f64::min);
                (i, d)
            })
            .collect();
        selected.push(best_of(points, &cands));
    }
    selected
}

pub fn knn_oracle(query: &Point3, base: &[Point3], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = base.iter().enumerate().map(|(i, p)| (sq(query, p), i)).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<usize> = all.iter().take(k).map(|x| x.1).collect();
    while out.len() < k {
        out.push(*out.last().unwrap());
    }
    out
}

pub fn idw_oracle(
    fine: &[Point3],
    coarse: &[Point3],
    feats: &[Vec<f64>],
    k: usize,
    eps: f64,
    exact_eps: f64,
) -> Vec<Vec<f64>> {
    let width = feats[0].len();
    fine.iter()
        .map(|p| {
            let nb = knn_oracle(p, coarse, k.min(coarse.len()));
            let d0 = sq(p, &coarse[nb[0]]).sqrt();
            if d0 < exact_eps {
                return feats[nb[0]].clone();
            }
            let mut w = Vec::new();
            let mut total = 0.0;
            for &j in &nb {
                let wj = 1.0 / (sq(p, &coarse[j]).sqrt() + eps);
                w.push(wj);
                total += wj;
            }
            let mut out = vec![0.0; width];
            for (i, &j) in nb.iter().enumerate() {
                for c in 0..width {
                    out[c] += w[i] / total * feats[j][c];
                }
            }
            out
        })
        .collect()
}

pub fn anchors(m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![0.0];
    }
    (0..m).map(|i| -1.0 + 2.0 * i as f64 / (m - 1) as f64).collect()
}

/// lambda * exp(-u^2/2) + (1 - lambda) * cos(u), u = (x - v) / (sigma + eps),
/// channels ordered axis-major and truncated to `width`.
pub fn adaptive_oracle(rel: &[Point3], sigma: f64, lambda: f64, width: usize, eps: f64) -> Vec<Vec<f64>> {
    let m = width.div_ceil(3);
    let v = anchors(m);
    rel.iter()
        .map(|p| {
            let mut row = Vec::new();
            for axis in 0..3 {
                for anchor in &v {
                    let u = (p[axis] - anchor) / (sigma + eps);
                    row.push(lambda * (-0.5 * u * u).exp() + (1.0 - lambda) * u.cos());
                }
            }
            row.truncate(width);
            row
        })
        .collect()
}

/// Per axis [sin(b x / a^(j/L)), cos(b x / a^(j/L))] for j = 1..L.
pub fn fourier_oracle(rel: &[Point3], l: usize, alpha: f64, beta: f64) -> Vec<Vec<f64>> {
    rel.iter()
        .map(|p| {
            let mut row = Vec::new();
            for axis in 0..3 {
                for j in 1..=l {
                    let omega = alpha.powf(j as f64 / l as f64);
                    row.push((beta * p[axis] / omega).sin());
                    row.push((beta * p[axis] / omega).cos());
                }
            }
            row
        })
        .collect()
}

pub fn modulate_oracle(h: &[Vec<f64>], p: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = h.to_vec();
    for r in 0..h.len() {
        for c in 0..h[r].len() {
            out[r][c] = (h[r][c] + p[r][c]) * p[r][c];
        }
    }
    out
}

/// Two-pass mean of per-axis population standard deviations.
pub fn sigma_g_oracle(points: &[Point3]) -> f64 {
    let n = points.len() as f64;
    let mut total = 0.0;
    for a in 0..3 {
        let mean = points.iter().map(|p| p[a]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[a] - mean).powi(2)).sum::<f64>() / n;
        total += var.sqrt();
    }
    total / 3.0
}

pub fn sigmoid_oracle(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `[max over rows | mean over rows]`.
pub fn pool_oracle(rows: &[Vec<f64>]) -> Vec<f64> {
    let w = rows[0].len();
    let mut out = Vec::with_capacity(2 * w);
    for c in 0..w {
        out.push(rows.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max));
    }
    for c in 0..w {
        out.push(rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64);
    }
    out
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// One adaptive-only stage: FPS, kNN among the previous level, relative
/// coordinates, code at the incoming width, modulation, pooling.
pub fn stage_oracle(
    points: &[Point3],
    feats: &[Vec<f64>],
    centroids: usize,
    k: usize,
    sigma: f64,
    lambda: f64,
    eps: f64,
) -> (Vec<Point3>, Vec<Vec<f64>>) {
    let width = feats[0].len();
    let centers = fps_oracle(points, centroids);
    let mut out = Vec::new();
    for &c in &centers {
        let nb = knn_oracle(&points[c], points, k);
        let rel: Vec<Point3> = nb
            .iter()
            .map(|&j| [0, 1, 2].map(|a| points[j][a] - points[c][a]))
            .collect();
        let code = adaptive_oracle(&rel, sigma, lambda, width, eps);
        let h: Vec<Vec<f64>> = nb.iter().map(|&j| feats[j].clone()).collect();
        out.push(pool_oracle(&modulate_oracle(&h, &code)));
    }
    (centers.iter().map(|&c| points[c]).collect(), out)
}

/// Full adaptive-only classification descriptor with default halving.
pub fn descriptor_oracle(
    raw: &[Point3],
    dim: usize,
    k: usize,
    stages: usize,
    sigma0: f64,
    tau: f64,
    kappa: f64,
    eps: f64,
) -> Vec<f64> {
    let n = raw.len() as f64;
    let mean: Vec<f64> = (0..3).map(|a| raw.iter().map(|p| p[a]).sum::<f64>() / n).collect();
    let centered: Vec<Point3> = raw.iter().map(|p| [0, 1, 2].map(|a| p[a] - mean[a])).collect();
    let r = centered
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .fold(0.0, f64::max);
    let pts: Vec<Point3> = centered.iter().map(|p| p.map(|v| v / r)).collect();
    let sg = sigma_g_oracle(&pts);
    let sigma = sigma0 * (1.0 + sg);
    let lambda = sigmoid_oracle((sg - tau) * kappa);
    let mut level_pts = pts.clone();
    let mut level_feats = adaptive_oracle(&pts, sigma, lambda, dim, eps);
    let mut desc = Vec::new();
    for t in 1..=stages {
        let n_t = raw.len() >> t;
        let (p, f) = stage_oracle(&level_pts, &level_feats, n_t, k, sigma, lambda, eps);
        desc.extend(unit(&pool_oracle(&f)));
        level_pts = p;
        level_feats = f;
    }
    unit(&desc)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Prints the one-line verdict used by the acceptance target.
pub fn verdict(id: &str, pass: bool, detail: &str) {
    println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
}
