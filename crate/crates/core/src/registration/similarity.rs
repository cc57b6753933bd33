//! Normalized cross correlation (global and windowed) with gradients with
//! respect to the moving image samples.

use serde::{Deserialize, Serialize};

use crate::field::interp;
use crate::grid::Grid;
use crate::par;

/// Similarity measure used inside the registration objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Similarity {
    /// Zero-mean NCC over the whole volume.
    Global,
    /// Mean of NCC over cubic windows of half-width `radius` voxels.
    Local { radius: usize },
}

impl Default for Similarity {
    fn default() -> Self {
        Similarity::Global
    }
}

const LOCAL_EPS: f64 = 1e-3;

/// `sum a`, `sum (a - mean)^2` style statistics computed in two passes.
fn centered(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = par::sum(data.len(), |i| data[i]) / n;
    let ss = par::sum(data.len(), |i| {
        let d = data[i] - mean;
        d * d
    });
    (mean, ss)
}

/// Global NCC of `a` and `b`; zero when either has no variance.
pub fn ncc_values(a: &[f64], b: &[f64]) -> f64 {
    global(a, b, false).0
}

/// Global NCC and optionally `d ncc / d b_i`.
pub(crate) fn global(a: &[f64], b: &[f64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let (ma, sa) = centered(a);
    let (mb, sb) = centered(b);
    if !(sa > 0.0 && sb > 0.0) {
        return (0.0, want_grad.then(|| vec![0.0; b.len()]));
    }
    let sab = par::sum(a.len(), |i| (a[i] - ma) * (b[i] - mb));
    let norm = (sa * sb).sqrt();
    let ncc = sab / norm;
    let grad = want_grad.then(|| par::map_indices(b.len(), |i| (a[i] - ma) / norm - ncc * (b[i] - mb) / sb));
    (ncc, grad)
}

/// Sum over the clipped cube `[i - r, i + r]` along one axis.
fn box_axis(shape: [usize; 3], data: &[f64], axis: usize, r: usize) -> Vec<f64> {
    let g = Grid::unit(shape);
    let n = shape[axis];
    let stride = g.stride(axis);
    // prefix sums along each line, then window differences
    let lines: Vec<usize> = (0..data.len()).filter(|&i| g.coords(i)[axis] == 0).collect();
    let sums = par::map_slice(&lines, |&start| {
        let mut pre = vec![0.0; n + 1];
        for j in 0..n {
            pre[j + 1] = pre[j] + data[start + j * stride];
        }
        (0..n)
            .map(|j| {
                let lo = j.saturating_sub(r);
                let hi = (j + r + 1).min(n);
                pre[hi] - pre[lo]
            })
            .collect::<Vec<f64>>()
    });
    let mut out = vec![0.0; data.len()];
    for (start, line) in lines.iter().zip(sums) {
        for (j, v) in line.into_iter().enumerate() {
            out[start + j * stride] = v;
        }
    }
    out
}

pub(crate) fn box_sum(shape: [usize; 3], data: &[f64], r: usize) -> Vec<f64> {
    let x = box_axis(shape, data, 0, r);
    let y = box_axis(shape, &x, 1, r);
    box_axis(shape, &y, 2, r)
}

/// Windowed NCC averaged over voxels, and optionally its gradient with
/// respect to `b`.
pub(crate) fn local(shape: [usize; 3], a: &[f64], b: &[f64], r: usize, want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let len = a.len();
    let ones = vec![1.0; len];
    let cnt = box_sum(shape, &ones, r);
    let sa = box_sum(shape, a, r);
    let sb = box_sum(shape, b, r);
    let saa = box_sum(shape, &par::map_indices(len, |i| a[i] * a[i]), r);
    let sbb = box_sum(shape, &par::map_indices(len, |i| b[i] * b[i]), r);
    let sab = box_sum(shape, &par::map_indices(len, |i| a[i] * b[i]), r);

    // per-window terms: cc = C / D with D = sqrt(A B + eps)
    let terms = par::map_indices(len, |i| {
        let n = cnt[i];
        let va = (saa[i] - sa[i] * sa[i] / n).max(0.0);
        let vb = (sbb[i] - sb[i] * sb[i] / n).max(0.0);
        let c = sab[i] - sa[i] * sb[i] / n;
        let d = (va * vb + LOCAL_EPS).sqrt();
        let cc = c / d;
        let d3 = d * d * d;
        // partials of cc with respect to Sb, Sbb, Sab
        let p_sb = -sa[i] / (n * d) + c * va * sb[i] / (n * d3);
        let p_sbb = -c * va / (2.0 * d3);
        let p_sab = 1.0 / d;
        [cc, p_sb, p_sbb, p_sab]
    });
    let value = par::sum(len, |i| terms[i][0]) / len as f64;
    if !want_grad {
        return (value, None);
    }
    let p1 = box_sum(shape, &par::map_indices(len, |i| terms[i][1]), r);
    let p2 = box_sum(shape, &par::map_indices(len, |i| terms[i][2]), r);
    let p3 = box_sum(shape, &par::map_indices(len, |i| terms[i][3]), r);
    let inv = 1.0 / len as f64;
    let grad = par::map_indices(len, |j| inv * (p1[j] + 2.0 * b[j] * p2[j] + a[j] * p3[j]));
    (value, Some(grad))
}

impl Similarity {
    /// Similarity of `fixed` and `moving` on `grid`, with optional gradient
    /// with respect to `moving`.
    pub(crate) fn eval(&self, shape: [usize; 3], fixed: &[f64], moving: &[f64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
        match *self {
            Similarity::Global => global(fixed, moving, want_grad),
            Similarity::Local { radius } => local(shape, fixed, moving, radius, want_grad),
        }
    }
}

/// Image pulled back through `u` with replicate edges, plus the derivative
/// of each sample with respect to the displacement (per mm).
pub(crate) fn warp_with_grad(
    grid: &Grid,
    img: &[f64],
    u: &[[f64; 3]],
    want_grad: bool,
) -> (Vec<f64>, Option<Vec<[f64; 3]>>) {
    let shape = grid.shape;
    let sp = grid.spacing;
    let pos = |i: usize| {
        let c = grid.coords(i);
        let d = u[i];
        [
            c[0] as f64 + d[0] / sp[0],
            c[1] as f64 + d[1] / sp[1],
            c[2] as f64 + d[2] / sp[2],
        ]
    };
    if !want_grad {
        let v = par::map_indices(u.len(), |i| {
            interp::blend(shape, interp::clamped_axes(shape, pos(i)), |j| img[j])
        });
        return (v, None);
    }
    let both = par::map_indices(u.len(), |i| {
        let (v, g) = interp::blend_grad(shape, interp::clamped_axes(shape, pos(i)), |j| img[j]);
        (v, [g[0] / sp[0], g[1] / sp[1], g[2] / sp[2]])
    });
    let (v, g): (Vec<f64>, Vec<[f64; 3]>) = both.into_iter().unzip();
    (v, Some(g))
}
