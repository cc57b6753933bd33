//! Exact Euclidean distance transform (separable lower-envelope algorithm of
//! Felzenszwalb and Huttenlocher), anisotropic-spacing aware.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::par;
use crate::volume::BinaryMask;

/// Squared distance transform of one sampled function `f` along a line with
/// sample spacing `h`: `d[i] = min_j f[j] + (h (i - j))^2`.
fn line_sq(f: &[f64], h: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let xq = q as f64 * h;
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let xp = p as f64 * h;
                    let s = ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let x = i as f64 * h;
        while k + 1 < v.len() && z[k + 1] < x {
            k += 1;
        }
        let d = x - v[k] as f64 * h;
        *o = d * d + f[v[k]];
    }
}

fn transform_axis(g: &Grid, data: &[f64], axis: usize) -> Vec<f64> {
    let n = g.shape[axis];
    let h = g.spacing[axis];
    let stride = g.stride(axis);
    // enumerate line starts: every voxel whose coordinate along `axis` is 0
    let starts: Vec<usize> = (0..g.len()).filter(|&i| g.coords(i)[axis] == 0).collect();
    let lines = par::map_slice(&starts, |&s| {
        let f: Vec<f64> = (0..n).map(|t| data[s + t * stride]).collect();
        let mut out = vec![0.0; n];
        let (mut v, mut z) = (Vec::with_capacity(n), Vec::with_capacity(n + 1));
        line_sq(&f, h, &mut out, &mut v, &mut z);
        out
    });
    let mut result = vec![0.0; data.len()];
    for (s, line) in starts.iter().zip(lines) {
        for (t, val) in line.into_iter().enumerate() {
            result[s + t * stride] = val;
        }
    }
    result
}

/// Distance in mm from every voxel center to the nearest foreground voxel
/// center (0 on the foreground).
pub fn distance_transform(m: &BinaryMask) -> Result<Vec<f64>> {
    if m.is_empty() {
        return Err(Error::EmptyMask);
    }
    let g = *m.grid();
    let mut cur: Vec<f64> = m
        .data()
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();
    for axis in 0..3 {
        cur = transform_axis(&g, &cur, axis);
    }
    Ok(cur.into_iter().map(f64::sqrt).collect())
}
