//! One-to-one lesion correspondence by centroid distance.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::centroid;
use crate::grid::Point3;
use crate::volume::InstanceMask;

/// Default center-distance gate in mm.
pub const MATCH_THRESHOLD_MM: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub gt_label: u16,
    pub pred_label: u16,
    pub distance_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionMatch {
    /// Sorted by ground-truth label.
    pub pairs: Vec<MatchedPair>,
    pub unmatched_gt: Vec<u16>,
    pub unmatched_pred: Vec<u16>,
    pub threshold_mm: f64,
}

/// Minimum-cost perfect assignment on a square cost matrix (row-major,
/// `n × n`). Returns `col_of_row`.
///
/// Shortest augmenting path with vertex potentials, `O(n³)`. Rows are
/// inserted in index order and ties resolve toward the lower column, so the
/// result is a pure function of the matrix.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n × n");
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; column 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        col_of_row[row_of[j] - 1] = j - 1;
    }
    col_of_row
}

fn centroids(m: &InstanceMask) -> Result<Vec<(u16, Point3)>> {
    m.labels()
        .into_iter()
        .map(|l| Ok((l, centroid(m, l)?)))
        .collect()
}

/// Match instances of `gt` and `pred` one-to-one so that the number of pairs
/// within `threshold_mm` is maximal and, among those, the summed centroid
/// distance is minimal.
pub fn match_lesions(gt: &InstanceMask, pred: &InstanceMask, threshold_mm: f64) -> Result<LesionMatch> {
    gt.grid().ensure_matches(pred.grid(), "lesion matching")?;
    let cg = centroids(gt)?;
    let cp = centroids(pred)?;
    Ok(match_centroids(&cg, &cp, threshold_mm))
}

/// [`match_lesions`] on precomputed `(label, centroid)` lists.
pub fn match_centroids(gt: &[(u16, Point3)], pred: &[(u16, Point3)], threshold_mm: f64) -> LesionMatch {
    let n = gt.len().max(pred.len());
    let dist = |i: usize, j: usize| gt[i].1.distance(&pred[j].1);
    // a gated or padded cell costs more than any set of admissible pairs,
    // so the pair count is maximized before distance is minimized
    let big = 1.0 + threshold_mm.max(0.0) * (n as f64 + 1.0);
    let mut cost = vec![big; n * n];
    for i in 0..gt.len() {
        for j in 0..pred.len() {
            let d = dist(i, j);
            if d <= threshold_mm {
                cost[i * n + j] = d;
            }
        }
    }
    let assign = hungarian(&cost, n);
    let mut pairs = Vec::new();
    let mut used_pred = vec![false; pred.len()];
    let mut unmatched_gt = Vec::new();
    for (i, &(gl, _)) in gt.iter().enumerate() {
        let j = assign[i];
        if j < pred.len() && dist(i, j) <= threshold_mm {
            used_pred[j] = true;
            pairs.push(MatchedPair {
                gt_label: gl,
                pred_label: pred[j].0,
                distance_mm: dist(i, j),
            });
        } else {
            unmatched_gt.push(gl);
        }
    }
    let unmatched_pred = pred
        .iter()
        .zip(&used_pred)
        .filter(|(_, &u)| !u)
        .map(|(p, _)| p.0)
        .collect();
    LesionMatch {
        pairs,
        unmatched_gt,
        unmatched_pred,
        threshold_mm,
    }
}
