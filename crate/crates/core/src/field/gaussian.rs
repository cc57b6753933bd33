//! Separable Gaussian smoothing with replicate edges.

use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::par;
use crate::volume::Volume;

/// Per-axis Gaussian standard deviation in mm, truncated at
/// `truncation * sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub sigma: [f64; 3],
    pub truncation: f64,
}

impl KernelSpec {
    pub fn isotropic(sigma: f64) -> Self {
        KernelSpec {
            sigma: [sigma; 3],
            truncation: 4.0,
        }
    }

    /// Sigma in voxels of `grid`.
    pub fn sigma_voxels(&self, grid: &Grid) -> [f64; 3] {
        std::array::from_fn(|k| self.sigma[k] / grid.spacing[k])
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::isotropic(1.0)
    }
}

/// Discretely normalized 1D kernel of half-width `ceil(truncation * sigma)`.
pub fn kernel_1d(sigma_vox: f64, truncation: f64) -> Vec<f64> {
    if sigma_vox <= 0.0 {
        return vec![1.0];
    }
    let r = (truncation * sigma_vox).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma_vox * sigma_vox)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= s);
    k
}

fn convolve_axis(shape: [usize; 3], input: &[f64], axis: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let n = shape[axis] as i64;
    let stride = match axis {
        0 => 1,
        1 => shape[0],
        _ => shape[0] * shape[1],
    };
    let slice = shape[0] * shape[1];
    let mut out = vec![0.0; input.len()];
    par::for_each_chunk_mut(&mut out, slice, |z, chunk| {
        for (o, v) in chunk.iter_mut().enumerate() {
            let idx = z * slice + o;
            let pos = match axis {
                0 => (o % shape[0]) as i64,
                1 => (o / shape[0]) as i64,
                _ => z as i64,
            };
            let base = idx as i64 - pos * stride as i64;
            let mut acc = 0.0;
            for (t, w) in kernel.iter().enumerate() {
                let p = (pos + t as i64 - r).clamp(0, n - 1);
                acc += w * input[(base + p * stride as i64) as usize];
            }
            *v = acc;
        }
    });
    out
}

/// Separable blur of an `f64` lattice; `sigma_vox` per axis, 0 skips an axis.
pub fn blur_f64(shape: [usize; 3], data: &[f64], sigma_vox: [f64; 3], truncation: f64) -> Vec<f64> {
    let mut cur = data.to_vec();
    for axis in 0..3 {
        if sigma_vox[axis] > 0.0 && shape[axis] > 1 {
            let k = kernel_1d(sigma_vox[axis], truncation);
            cur = convolve_axis(shape, &cur, axis, &k);
        }
    }
    cur
}

/// Blur each component of a vector lattice.
pub fn blur_vec(shape: [usize; 3], data: &[[f64; 3]], sigma_vox: [f64; 3], truncation: f64) -> Vec<[f64; 3]> {
    let comps: [Vec<f64>; 3] = std::array::from_fn(|c| {
        let d: Vec<f64> = data.iter().map(|v| v[c]).collect();
        blur_f64(shape, &d, sigma_vox, truncation)
    });
    (0..data.len())
        .map(|i| [comps[0][i], comps[1][i], comps[2][i]])
        .collect()
}

/// Gaussian smoothing of a volume; sigma is given in mm.
pub fn gaussian_blur(v: &Volume, k: &KernelSpec) -> Volume {
    let g = *v.grid();
    let out = blur_f64(g.shape, &v.to_f64(), k.sigma_voxels(&g), k.truncation);
    Volume::from_f64(g, &out).expect("blur of finite data is finite")
}
