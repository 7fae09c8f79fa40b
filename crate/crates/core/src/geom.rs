//! Exact geometric kernels: farthest point sampling, k-nearest neighbors,
//! neighborhood grouping and inverse-distance-weighted interpolation.
//!
//! All comparisons use squared Euclidean distance; ties are broken by the
//! lexicographic order of coordinates (FPS) or by index (k-NN), so results
//! never depend on thread scheduling.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::Point3;
use crate::error::{Error, Result};

#[inline]
pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn lex_cmp(a: &Point3, b: &Point3) -> Ordering {
    a[0].total_cmp(&b[0])
        .then(a[1].total_cmp(&b[1]))
        .then(a[2].total_cmp(&b[2]))
}

/// Returns true when candidate `i` with score `di` beats the incumbent `j`
/// with score `dj`: larger score, then smaller coordinates, then smaller index.
#[inline]
fn fps_better(points: &[Point3], i: usize, di: f64, j: usize, dj: f64) -> bool {
    match di.total_cmp(&dj) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match lex_cmp(&points[i], &points[j]) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => i < j,
        },
    }
}

/// Greedy farthest point sampling.
///
/// The first pick is the point farthest from the cloud centroid; every later
/// pick maximizes the squared distance to the nearest already-selected point.
/// Indices are returned in selection order.
pub fn fps(points: &[Point3], n: usize) -> Result<Vec<usize>> {
    let total = points.len();
    if n < 1 || n > total {
        return Err(Error::BadCount {
            requested: n,
            available: total,
        });
    }
    // |n p - sum|^2 ranks like the distance to the centroid and is exact
    // for integer-valued coordinates, so ties survive translation.
    let sum = points.iter().fold([0.0; 3], |acc, p| [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2]]);
    let scale = total as f64;
    let spread = |p: &Point3| dist2(&p.map(|v| v * scale), &sum);

    let mut seed = 0;
    let mut seed_d = spread(&points[0]);
    for (i, p) in points.iter().enumerate().skip(1) {
        let d = spread(p);
        if fps_better(points, i, d, seed, seed_d) {
            seed = i;
            seed_d = d;
        }
    }

    let mut selected = Vec::with_capacity(n);
    selected.push(seed);
    let mut min_d: Vec<f64> = points.iter().map(|p| dist2(p, &points[seed])).collect();
    // Already-selected points are excluded with a negative score.
    min_d[seed] = -1.0;

    while selected.len() < n {
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in min_d.iter().enumerate() {
            if d < 0.0 {
                continue;
            }
            if best == usize::MAX || fps_better(points, i, d, best, best_d) {
                best = i;
                best_d = d;
            }
        }
        selected.push(best);
        min_d[best] = -1.0;
        let anchor = points[best];
        for (i, d) in min_d.iter_mut().enumerate() {
            if *d > 0.0 {
                let nd = dist2(&points[i], &anchor);
                if nd < *d {
                    *d = nd;
                }
            }
        }
    }
    Ok(selected)
}

fn knn_single(query: &Point3, base: &[Point3], k: usize) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = base
        .iter()
        .enumerate()
        .map(|(i, p)| (dist2(query, p), i))
        .collect();
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let keep = k.min(cand.len());
    if keep < cand.len() {
        cand.select_nth_unstable_by(keep - 1, by_dist);
        cand.truncate(keep);
    }
    cand.sort_unstable_by(by_dist);
    let mut out: Vec<usize> = cand.into_iter().map(|(_, i)| i).collect();
    let last = *out.last().expect("base is non-empty");
    out.resize(k, last);
    out
}

/// Exact k-nearest neighbors of every query within `base`, each list sorted
/// by (distance, index). When `k` exceeds the base size the farthest found
/// neighbor is repeated to length `k`.
pub fn knn(queries: &[Point3], base: &[Point3], k: usize) -> Result<Vec<Vec<usize>>> {
    if k < 1 {
        return Err(Error::BadK(k));
    }
    if base.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(queries
        .par_iter()
        .map(|q| knn_single(q, base, k))
        .collect())
}

/// A centroid's local neighborhood expressed relative to the centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub center_index: usize,
    pub neighbor_indices: Vec<usize>,
    pub rel_coords: Vec<Point3>,
}

impl Neighborhood {
    pub fn new(points: &[Point3], center_index: usize, neighbor_indices: Vec<usize>) -> Self {
        let c = points[center_index];
        let rel_coords = neighbor_indices
            .iter()
            .map(|&j| sub(&points[j], &c))
            .collect();
        Self {
            center_index,
            neighbor_indices,
            rel_coords,
        }
    }
}

pub fn gather_rows(features: ArrayView2<'_, f64>, indices: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), features.ncols()));
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).assign(&features.row(i));
    }
    out
}

/// Groups the k nearest points around each center, returning the
/// neighborhood geometry and the gathered k×d feature block.
pub fn group(
    points: &[Point3],
    centers: &[usize],
    k: usize,
    features: ArrayView2<'_, f64>,
) -> Result<Vec<(Neighborhood, Array2<f64>)>> {
    if features.nrows() != points.len() {
        return Err(Error::ShapeMismatch {
            left: (points.len(), 3),
            right: features.dim(),
        });
    }
    if let Some(&bad) = centers.iter().find(|&&c| c >= points.len()) {
        return Err(Error::BadCount {
            requested: bad,
            available: points.len(),
        });
    }
    let queries: Vec<Point3> = centers.iter().map(|&c| points[c]).collect();
    let neighbors = knn(&queries, points, k)?;
    Ok(centers
        .iter()
        .zip(neighbors)
        .map(|(&c, nb)| {
            let block = gather_rows(features, &nb);
            (Neighborhood::new(points, c, nb), block)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdwParams {
    /// Coarse neighbors per fine point; clamped to the coarse count.
    pub k: usize,
    /// Added to each distance before taking the reciprocal.
    pub eps: f64,
    /// Distances below this copy the coarse feature verbatim.
    pub exact_eps: f64,
}

impl Default for IdwParams {
    fn default() -> Self {
        Self {
            k: 3,
            eps: 1e-8,
            exact_eps: 1e-10,
        }
    }
}

/// Normalized inverse-distance weights of each fine point over its nearest
/// coarse points, as (coarse index, weight) pairs summing to one.
pub fn idw_weights(
    fine: &[Point3],
    coarse: &[Point3],
    params: &IdwParams,
) -> Result<Vec<Vec<(usize, f64)>>> {
    if coarse.is_empty() {
        return Err(Error::EmptyCoarse);
    }
    if params.k < 1 {
        return Err(Error::BadK(params.k));
    }
    let k = params.k.min(coarse.len());
    let neighbors = knn(fine, coarse, k)?;
    Ok(fine
        .iter()
        .zip(neighbors)
        .map(|(p, nb)| {
            let dists: Vec<f64> = nb.iter().map(|&j| dist2(p, &coarse[j]).sqrt()).collect();
            if dists[0] < params.exact_eps {
                return vec![(nb[0], 1.0)];
            }
            let inv: Vec<f64> = dists.iter().map(|d| 1.0 / (d + params.eps)).collect();
            let total: f64 = inv.iter().sum();
            nb.into_iter().zip(inv).map(|(j, w)| (j, w / total)).collect()
        })
        .collect())
}

/// Propagates coarse features onto fine points by inverse-distance weighting.
pub fn idw_interpolate(
    fine: &[Point3],
    coarse: &[Point3],
    coarse_feats: ArrayView2<'_, f64>,
    params: &IdwParams,
) -> Result<Array2<f64>> {
    if coarse_feats.nrows() != coarse.len() {
        return Err(Error::ShapeMismatch {
            left: (coarse.len(), 3),
            right: coarse_feats.dim(),
        });
    }
    let weights = idw_weights(fine, coarse, params)?;
    let mut out = Array2::zeros((fine.len(), coarse_feats.ncols()));
    for (mut row, w) in out.outer_iter_mut().zip(weights) {
        for (j, wj) in w {
            row.scaled_add(wj, &coarse_feats.row(j));
        }
    }
    Ok(out)
}
