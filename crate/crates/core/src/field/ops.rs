//! Differential operators, warping and map composition.

use crate::error::Result;
use crate::field::{interp, DisplacementField};
use crate::grid::Grid;
use crate::par;
use crate::volume::{BinaryMask, InstanceMask, Volume};

/// Coefficient `D[i][j]` of the spacing-aware finite-difference operator on a
/// line of `n` samples: central differences inside, one-sided at the ends.
#[inline]
fn diff_coef(i: usize, j: usize, n: usize, h: f64) -> f64 {
    if n == 1 {
        return 0.0;
    }
    if i == 0 {
        match j {
            0 => -1.0 / h,
            1 => 1.0 / h,
            _ => 0.0,
        }
    } else if i == n - 1 {
        if j == n - 1 {
            1.0 / h
        } else if j == n - 2 {
            -1.0 / h
        } else {
            0.0
        }
    } else if j == i + 1 {
        0.5 / h
    } else if j + 1 == i {
        -0.5 / h
    } else {
        0.0
    }
}

/// Apply `D` (or its transpose) along `axis` by gathering over the
/// three-point neighbourhood.
fn diff_gather(grid: &Grid, data: &[f64], axis: usize, transpose: bool) -> Vec<f64> {
    let n = grid.shape[axis];
    let h = grid.spacing[axis];
    let stride = grid.stride(axis);
    par::map_indices(data.len(), |idx| {
        let pos = grid.coords(idx)[axis];
        let base = idx - pos * stride;
        let lo = pos.saturating_sub(1);
        let hi = (pos + 1).min(n - 1);
        let mut acc = 0.0;
        for other in lo..=hi {
            let c = if transpose {
                diff_coef(other, pos, n, h)
            } else {
                diff_coef(pos, other, n, h)
            };
            if c != 0.0 {
                acc += c * data[base + other * stride];
            }
        }
        acc
    })
}

/// Partial derivative along `axis` (per mm).
pub(crate) fn diff(grid: &Grid, data: &[f64], axis: usize) -> Vec<f64> {
    diff_gather(grid, data, axis, false)
}

/// Adjoint of [`diff`].
pub(crate) fn diff_adjoint(grid: &Grid, data: &[f64], axis: usize) -> Vec<f64> {
    diff_gather(grid, data, axis, true)
}

/// Spatial gradient of a volume in intensity units per mm.
pub fn gradient(v: &Volume) -> DisplacementField {
    let g = *v.grid();
    let d = v.to_f64();
    let parts: [Vec<f64>; 3] = std::array::from_fn(|k| diff(&g, &d, k));
    DisplacementField::from_components(g, [&parts[0], &parts[1], &parts[2]])
        .expect("finite differences of finite data are finite")
}

/// Jacobian `I + grad(u)` of the map `x + u(x)`; entry `[c][k]` is
/// `d phi_c / d x_k`.
pub fn jacobian(u: &DisplacementField) -> Vec<[[f64; 3]; 3]> {
    let g = *u.grid();
    let comps = u.components();
    let d: [[Vec<f64>; 3]; 3] =
        std::array::from_fn(|c| std::array::from_fn(|k| diff(&g, &comps[c], k)));
    (0..g.len())
        .map(|i| {
            std::array::from_fn(|c| {
                std::array::from_fn(|k| d[c][k][i] + if c == k { 1.0 } else { 0.0 })
            })
        })
        .collect()
}

/// Continuous voxel coordinate in `src` of `phi(x_i) = x_i + u_i`, where
/// `x_i` is voxel `i` of the field's grid.
#[inline]
pub(crate) fn pullback_coord(src: &Grid, field_grid: &Grid, i: usize, u: [f64; 3]) -> [f64; 3] {
    let c = field_grid.coords(i);
    if src == field_grid {
        std::array::from_fn(|k| c[k] as f64 + u[k] / src.spacing[k])
    } else {
        src.mm_to_voxel(field_grid.voxel_center(c).offset(u))
    }
}

/// Pull-back warp `out(x) = v(x + u(x))` (trilinear) on the shared grid;
/// samples falling outside take the volume minimum.
pub fn warp(v: &Volume, u: &DisplacementField) -> Result<Volume> {
    v.grid().ensure_matches(u.grid(), "warp")?;
    warp_onto(v, u)
}

/// Pull-back warp whose output lives on the field's grid.
pub fn warp_onto(v: &Volume, u: &DisplacementField) -> Result<Volume> {
    let src = *v.grid();
    let fg = *u.grid();
    let fill = v.min() as f64;
    let data = par::map_indices(fg.len(), |i| {
        let c = pullback_coord(&src, &fg, i, u.data()[i]);
        interp::trilinear(src.shape, v.data(), c).unwrap_or(fill) as f32
    });
    Volume::new(fg, data)
}

/// Nearest-neighbour pull-back of a label mask; outside samples are 0.
pub fn warp_mask(m: &InstanceMask, u: &DisplacementField) -> Result<InstanceMask> {
    m.grid().ensure_matches(u.grid(), "warp")?;
    warp_mask_onto(m, u)
}

/// Label pull-back with output on the field's grid.
pub fn warp_mask_onto(m: &InstanceMask, u: &DisplacementField) -> Result<InstanceMask> {
    let src = *m.grid();
    let fg = *u.grid();
    let data = par::map_indices(fg.len(), |i| {
        let c = pullback_coord(&src, &fg, i, u.data()[i]);
        interp::nearest(src.shape, m.data(), c).unwrap_or(0)
    });
    InstanceMask::new(fg, data, m.num_instances())
}

/// Nearest-neighbour pull-back of a binary mask with output on the field grid.
pub fn warp_binary(m: &BinaryMask, u: &DisplacementField) -> Result<BinaryMask> {
    let src = *m.grid();
    let fg = *u.grid();
    let data = par::map_indices(fg.len(), |i| {
        let c = pullback_coord(&src, &fg, i, u.data()[i]);
        interp::nearest(src.shape, m.data(), c).unwrap_or(false)
    });
    BinaryMask::new(fg, data)
}

/// Displacement of the composed map `phi_ab(phi_ba(x))`:
/// `w(x) = u_ba(x) + u_ab(x + u_ba(x))`, with `u_ab` sampled trilinearly
/// and border-replicated.
pub fn compose(u_ab: &DisplacementField, u_ba: &DisplacementField) -> Result<DisplacementField> {
    u_ab.grid().ensure_matches(u_ba.grid(), "compose")?;
    let g = *u_ba.grid();
    let data = par::map_indices(g.len(), |i| {
        let b = u_ba.data()[i];
        let c = pullback_coord(&g, &g, i, b);
        let a = interp::trilinear_vec_clamped(g.shape, u_ab.data(), c);
        [b[0] + a[0], b[1] + a[1], b[2] + a[2]]
    });
    DisplacementField::new(g, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Point3;

    #[test]
    fn adjoint_matches_dense_transpose() {
        let g = Grid::new([5, 2, 4], [0.7, 1.3, 2.0], [0.0; 3]).unwrap();
        let n = g.len();
        for axis in 0..3 {
            // <D e_j, e_i> == <e_j, D^T e_i>
            for j in 0..n {
                let mut ej = vec![0.0; n];
                ej[j] = 1.0;
                let col = diff(&g, &ej, axis);
                for i in 0..n {
                    let mut ei = vec![0.0; n];
                    ei[i] = 1.0;
                    let row = diff_adjoint(&g, &ei, axis);
                    assert!((col[i] - row[j]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let v = Volume::filled(Grid::unit([4, 4, 4]), 2.0);
        assert_eq!(gradient(&v).max_norm(), 0.0);
    }

    #[test]
    fn gradient_of_linear_ramp_is_exact() {
        let g = Grid::new([6, 5, 4], [0.5, 1.0, 1.0], [1.0, 0.0, 0.0]).unwrap();
        let v = Volume::from_fn(g, |c| (2.0 * g.voxel_center(c)[0]) as f32).unwrap();
        for d in gradient(&v).data() {
            assert!((d[0] - 2.0).abs() < 1e-5 && d[1] == 0.0 && d[2] == 0.0);
        }
    }

    #[test]
    fn gradient_respects_spacing() {
        let g = Grid::new([5, 3, 3], [2.0, 1.0, 1.0], [0.0; 3]).unwrap();
        let v = Volume::from_fn(g, |[x, _, _]| x as f32).unwrap();
        assert!(gradient(&v).data().iter().all(|d| (d[0] - 0.5).abs() < 1e-12));
    }

    #[test]
    fn jacobian_of_zero_and_translation_is_identity() {
        let g = Grid::unit([4, 4, 4]);
        for u in [DisplacementField::zeros(g), DisplacementField::uniform(g, [1.5, -2.0, 0.25])] {
            for j in jacobian(&u) {
                for c in 0..3 {
                    for k in 0..3 {
                        assert_eq!(j[c][k], if c == k { 1.0 } else { 0.0 });
                    }
                }
            }
        }
    }

    #[test]
    fn jacobian_of_linear_field() {
        let g = Grid::new([6, 6, 6], [1.0, 0.5, 2.0], [0.0; 3]).unwrap();
        let u = DisplacementField::from_fn(g, |p| [0.2 * p[0], 0.2 * p[1], 0.2 * p[2]]).unwrap();
        for j in jacobian(&u) {
            for c in 0..3 {
                for k in 0..3 {
                    let e = if c == k { 1.2 } else { 0.0 };
                    assert!((j[c][k] - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_warp_is_bit_identical() {
        let g = Grid::new([5, 4, 3], [0.8, 0.8, 1.0], [10.0, -3.0, 7.0]).unwrap();
        let v = Volume::from_fn(g, |[x, y, z]| (x as f32).sin() + 0.1 * (y * z) as f32).unwrap();
        let out = warp(&v, &DisplacementField::zeros(g)).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn uniform_shift_moves_content() {
        let g = Grid::new([8, 3, 3], [2.0, 1.0, 1.0], [0.0; 3]).unwrap();
        let v = Volume::from_fn(g, |[x, y, z]| (x * x + y + z) as f32).unwrap();
        // u = -1 voxel along x => out(x) = v(x - 1): content shifts by +1
        let out = warp(&v, &DisplacementField::uniform(g, [-2.0, 0.0, 0.0])).unwrap();
        for z in 0..3 {
            for y in 0..3 {
                for x in 1..8 {
                    assert_eq!(out.get(x, y, z), v.get(x - 1, y, z));
                }
                assert_eq!(out.get(0, y, z), v.min());
            }
        }
    }

    #[test]
    fn warp_rejects_mismatched_grid() {
        let v = Volume::filled(Grid::unit([4, 4, 4]), 1.0);
        let u = DisplacementField::zeros(Grid::unit([4, 4, 5]));
        assert!(warp(&v, &u).is_err());
    }

    #[test]
    fn compose_exact_inverse_translations() {
        let g = Grid::new([6, 6, 6], [1.0, 0.8, 1.2], [0.0; 3]).unwrap();
        let t = [1.3, -0.7, 2.1];
        let w = compose(
            &DisplacementField::uniform(g, [-t[0], -t[1], -t[2]]),
            &DisplacementField::uniform(g, t),
        )
        .unwrap();
        assert!(w.max_norm() < 1e-6);
        let z = compose(&DisplacementField::zeros(g), &DisplacementField::zeros(g)).unwrap();
        assert_eq!(z.max_norm(), 0.0);
    }

    #[test]
    fn compose_linear_fields_matches_affine_algebra() {
        let g = Grid::unit([20, 20, 20]);
        let u = DisplacementField::from_fn(g, |p| [0.1 * p[0], 0.1 * p[1], 0.1 * p[2]]).unwrap();
        let w = compose(&u, &u).unwrap();
        // (1.1 x) mapped again: x + w = 1.21 x  =>  w = 0.21 x, while 1.1 x stays inside
        for i in 0..g.len() {
            let c = g.coords(i);
            if c.iter().all(|&v| (v as f64) * 1.1 <= 19.0) {
                let p: Point3 = g.voxel_center(c);
                for k in 0..3 {
                    assert!((w.data()[i][k] - 0.21 * p[k]).abs() < 1e-5);
                }
            }
        }
    }
}
