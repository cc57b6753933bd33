//! Slow, obviously-correct reference implementations used by the
//! integration and acceptance tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use lesiontrack::grid::{Grid, Point3};
use lesiontrack::registration::{Objective, Similarity};
use lesiontrack::{BinaryMask, DisplacementField, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Normalized weights `exp(-i²/2σ²)` for `|i| <= ceil(t·σ)`.
fn weights(sigma: f64, trunc: f64) -> Vec<(i64, f64)> {
    if sigma <= 0.0 {
        return vec![(0, 1.0)];
    }
    let r = (trunc * sigma).ceil().max(1.0) as i64;
    let raw: Vec<(i64, f64)> = (-r..=r).map(|i| (i, (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())).collect();
    let s: f64 = raw.iter().map(|w| w.1).sum();
    raw.into_iter().map(|(i, w)| (i, w / s)).collect()
}

/// Direct 3D convolution with the outer-product kernel and replicated edges.
pub fn naive_blur(shape: [usize; 3], data: &[f64], sigma: [f64; 3], trunc: f64) -> Vec<f64> {
    let w: Vec<Vec<(i64, f64)>> = (0..3)
        .map(|k| if shape[k] > 1 { weights(sigma[k], trunc) } else { vec![(0, 1.0)] })
        .collect();
    let g = Grid::unit(shape);
    let clamp = |v: i64, k: usize| v.clamp(0, shape[k] as i64 - 1) as usize;
    (0..g.len())
        .map(|i| {
            let c = g.coords(i);
            let mut acc = 0.0;
            for &(dz, wz) in &w[2] {
                for &(dy, wy) in &w[1] {
                    for &(dx, wx) in &w[0] {
                        let x = clamp(c[0] as i64 + dx, 0);
                        let y = clamp(c[1] as i64 + dy, 1);
                        let z = clamp(c[2] as i64 + dz, 2);
                        acc += wx * wy * wz * data[g.index(x, y, z)];
                    }
                }
            }
            acc
        })
        .collect()
}

/// Distance from every voxel center to the nearest foreground center, by
/// trying every foreground voxel.
pub fn brute_edt(m: &BinaryMask) -> Vec<f64> {
    let g = m.grid();
    let fg: Vec<Point3> = (0..g.len()).filter(|&i| m.data()[i]).map(|i| g.voxel_center(g.coords(i))).collect();
    (0..g.len())
        .map(|i| {
            let p = g.voxel_center(g.coords(i));
            fg.iter().map(|q| p.distance(q)).fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Component id per voxel (0 = background) by breadth-first flooding with
/// the given neighbour offsets; ids follow first-voxel scan order.
pub fn bfs_components(m: &BinaryMask, offsets: &[[i64; 3]]) -> (Vec<u32>, u32) {
    let g = m.grid();
    let mut lab = vec![0u32; g.len()];
    let mut n = 0;
    for s in 0..g.len() {
        if !m.data()[s] || lab[s] != 0 {
            continue;
        }
        n += 1;
        lab[s] = n;
        let mut q = VecDeque::from([s]);
        while let Some(i) = q.pop_front() {
            let c = g.coords(i);
            for o in offsets {
                let nb: Vec<i64> = (0..3).map(|k| c[k] as i64 + o[k]).collect();
                if (0..3).any(|k| nb[k] < 0 || nb[k] >= g.shape[k] as i64) {
                    continue;
                }
                let j = g.index(nb[0] as usize, nb[1] as usize, nb[2] as usize);
                if m.data()[j] && lab[j] == 0 {
                    lab[j] = n;
                    q.push_back(j);
                }
            }
        }
    }
    (lab, n)
}

pub fn brute_dice(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let na = a.data().iter().filter(|&&v| v).count();
    let nb = b.data().iter().filter(|&&v| v).count();
    let both = a.data().iter().zip(b.data()).filter(|(x, y)| **x && **y).count();
    if na + nb == 0 {
        1.0
    } else {
        2.0 * both as f64 / (na + nb) as f64
    }
}

/// Foreground voxels with a face neighbour outside the mask or the grid.
pub fn brute_surface(m: &BinaryMask) -> Vec<Point3> {
    let g = m.grid();
    let mut out = Vec::new();
    for i in 0..g.len() {
        if !m.data()[i] {
            continue;
        }
        let c = g.coords(i);
        let mut border = false;
        for k in 0..3 {
            for d in [-1i64, 1] {
                let v = c[k] as i64 + d;
                if v < 0 || v >= g.shape[k] as i64 {
                    border = true;
                } else {
                    let mut n = c;
                    n[k] = v as usize;
                    border |= !m.data()[g.index(n[0], n[1], n[2])];
                }
            }
        }
        if border {
            out.push(g.voxel_center(c));
        }
    }
    out
}

/// Fraction of both surfaces within `tol` of the other surface.
pub fn brute_nsd(a: &BinaryMask, b: &BinaryMask, tol: f64) -> f64 {
    let (sa, sb) = (brute_surface(a), brute_surface(b));
    match (sa.is_empty(), sb.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let near = |from: &[Point3], to: &[Point3]| {
        from.iter()
            .filter(|p| to.iter().any(|q| p.distance(q) <= tol))
            .count()
    };
    (near(&sa, &sb) + near(&sb, &sa)) as f64 / (sa.len() + sb.len()) as f64
}

/// Best `(pairs, total distance)` over every one-to-one partial assignment
/// with all pair distances `<= thr`: most pairs first, then least distance.
pub fn exhaustive_match(gt: &[Point3], pred: &[Point3], thr: f64) -> (usize, f64) {
    fn go(i: usize, gt: &[Point3], pred: &[Point3], used: &mut Vec<bool>, thr: f64, acc: (usize, f64), best: &mut (usize, f64)) {
        if i == gt.len() {
            if acc.0 > best.0 || (acc.0 == best.0 && acc.1 < best.1) {
                *best = acc;
            }
            return;
        }
        go(i + 1, gt, pred, used, thr, acc, best);
        for j in 0..pred.len() {
            let d = gt[i].distance(&pred[j]);
            if !used[j] && d <= thr {
                used[j] = true;
                go(i + 1, gt, pred, used, thr, (acc.0 + 1, acc.1 + d), best);
                used[j] = false;
            }
        }
    }
    let mut best = (0, 0.0);
    go(0, gt, pred, &mut vec![false; pred.len()], thr, (0, 0.0), &mut best);
    best
}

/// Lattice points `v` with `|v| <= r`, counted by enumeration of the cube.
pub fn lattice_ball_count(r: i64) -> usize {
    let mut n = 0;
    for x in -r..=r {
        for y in -r..=r {
            for z in -r..=r {
                n += usize::from(x * x + y * y + z * z <= r * r);
            }
        }
    }
    n
}

/// Random smooth image: blurred uniform noise plus a ramp, so it is never
/// constant.
pub fn smooth_image(g: Grid, r: &mut ChaCha8Rng) -> Volume {
    let raw: Vec<f64> = (0..g.len()).map(|_| r.gen_range(0.0..1.0)).collect();
    let sm = naive_blur(g.shape, &raw, [1.0; 3], 3.0);
    let data: Vec<f64> = sm
        .iter()
        .enumerate()
        .map(|(i, v)| 10.0 * v + 0.05 * g.coords(i)[0] as f64)
        .collect();
    Volume::from_f64(g, &data).unwrap()
}

/// Displacements whose per-axis magnitude lies in `[0.1, 0.4]` voxels, so
/// every sample point stays clear of the trilinear cell faces.
pub fn off_lattice_field(g: Grid, r: &mut ChaCha8Rng) -> DisplacementField {
    let data = (0..g.len())
        .map(|_| {
            std::array::from_fn(|k| {
                let m = r.gen_range(0.1..0.4) * g.spacing[k];
                if r.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
        })
        .collect();
    DisplacementField::new(g, data).unwrap()
}

/// Max-norm relative error of the analytic objective gradient against
/// central differences over every displacement component of both fields.
pub fn gradient_check(seed: u64, shape: [usize; 3], similarity: Similarity, lambda: f64) -> f64 {
    let mut r = rng(seed);
    let spacing = [r.gen_range(0.8..1.5), r.gen_range(0.8..1.5), r.gen_range(0.8..1.5)];
    let g = Grid::new(shape, spacing, [0.0; 3]).unwrap();
    let a = smooth_image(g, &mut r);
    let b = smooth_image(g, &mut r);
    let uf = off_lattice_field(g, &mut r);
    let ub = off_lattice_field(g, &mut r);
    let obj = Objective::new(&a, &b, lambda, similarity).unwrap();
    let (_, gf, gb) = obj.gradient(&uf, &ub).unwrap();
    let h = 1e-6;
    let total = |f: &DisplacementField, b: &DisplacementField| obj.terms(f, b).unwrap().total;
    let bump = |u: &DisplacementField, i: usize, k: usize, d: f64| {
        let mut data = u.data().to_vec();
        data[i][k] += d;
        DisplacementField::new(g, data).unwrap()
    };
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for i in 0..g.len() {
        for k in 0..3 {
            let fd_f = (total(&bump(&uf, i, k, h), &ub) - total(&bump(&uf, i, k, -h), &ub)) / (2.0 * h);
            let fd_b = (total(&uf, &bump(&ub, i, k, h)) - total(&uf, &bump(&ub, i, k, -h))) / (2.0 * h);
            num = num.max((gf.data()[i][k] - fd_f).abs()).max((gb.data()[i][k] - fd_b).abs());
            den = den.max(fd_f.abs()).max(fd_b.abs());
        }
    }
    num / den
}

pub fn random_shape(r: &mut ChaCha8Rng, max: usize) -> [usize; 3] {
    std::array::from_fn(|_| r.gen_range(1..=max))
}

pub fn random_spacing(r: &mut ChaCha8Rng) -> [f64; 3] {
    std::array::from_fn(|_| r.gen_range(0.5..2.0))
}

/// Bernoulli(`p`) voxels.
pub fn random_mask(g: Grid, p: f64, r: &mut ChaCha8Rng) -> BinaryMask {
    BinaryMask::new(g, (0..g.len()).map(|_| r.gen_bool(p)).collect()).unwrap()
}

/// Union of a few random axis-aligned ellipsoids, giving compact shapes with
/// real surfaces.
pub fn random_blobs(g: Grid, n: usize, r: &mut ChaCha8Rng) -> BinaryMask {
    let ext: [f64; 3] = std::array::from_fn(|k| g.shape[k] as f64 * g.spacing[k]);
    let blobs: Vec<([f64; 3], [f64; 3])> = (0..n)
        .map(|_| {
            (
                std::array::from_fn(|k| r.gen_range(0.0..ext[k])),
                std::array::from_fn(|k| r.gen_range(0.15..0.35) * ext[k] + 0.5),
            )
        })
        .collect();
    let data = (0..g.len())
        .map(|i| {
            let p = g.voxel_center(g.coords(i)).0;
            blobs.iter().any(|(c, a)| (0..3).map(|k| ((p[k] - c[k]) / a[k]).powi(2)).sum::<f64>() <= 1.0)
        })
        .collect();
    BinaryMask::new(g, data).unwrap()
}
