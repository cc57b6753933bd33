//! Gradient inverse-consistency penalty: mean squared Frobenius deviation of
//! the Jacobian of `phi_ab o phi_ba` from the identity.

use crate::error::Result;
use crate::field::ops::{diff, diff_adjoint};
use crate::field::{interp, DisplacementField};
use crate::grid::Grid;
use crate::par;

/// Penalty value and, optionally, gradients with respect to `u_ab` and `u_ba`.
pub(crate) fn penalty(
    grid: &Grid,
    u_ab: &[[f64; 3]],
    u_ba: &[[f64; 3]],
    want_grad: bool,
) -> (f64, Option<(Vec<[f64; 3]>, Vec<[f64; 3]>)>) {
    let shape = grid.shape;
    let sp = grid.spacing;
    let n = u_ba.len();
    let pos = |i: usize| {
        let c = grid.coords(i);
        let b = u_ba[i];
        [
            c[0] as f64 + b[0] / sp[0],
            c[1] as f64 + b[1] / sp[1],
            c[2] as f64 + b[2] / sp[2],
        ]
    };

    // composed displacement per component, and d u_ab(pos) / d pos in mm
    let comp = par::map_indices(n, |i| {
        let a = interp::clamped_axes(shape, pos(i));
        let mut w = [0.0; 3];
        let mut jac = [[0.0; 3]; 3];
        for c in 0..3 {
            let (v, g) = interp::blend_grad(shape, a, |j| u_ab[j][c]);
            w[c] = u_ba[i][c] + v;
            if want_grad {
                jac[c] = [g[0] / sp[0], g[1] / sp[1], g[2] / sp[2]];
            }
        }
        (w, jac)
    });

    let mut total = 0.0;
    let mut gw: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for c in 0..3 {
        let wc: Vec<f64> = comp.iter().map(|(w, _)| w[c]).collect();
        let mut acc = want_grad.then(|| vec![0.0; n]);
        for k in 0..3 {
            let d = diff(grid, &wc, k);
            total += par::sum(n, |i| d[i] * d[i]);
            if let Some(acc) = acc.as_mut() {
                let t = diff_adjoint(grid, &d, k);
                for (x, y) in acc.iter_mut().zip(t) {
                    *x += y;
                }
            }
        }
        if let Some(acc) = acc {
            gw[c] = acc;
        }
    }
    let value = total / n as f64;
    if !want_grad {
        return (value, None);
    }
    let scale = 2.0 / n as f64;
    let g_ba = par::map_indices(n, |i| {
        let jac = comp[i].1;
        std::array::from_fn(|d| {
            let mut s = 0.0;
            for c in 0..3 {
                let j = if c == d { 1.0 + jac[c][d] } else { jac[c][d] };
                s += gw[c][i] * j;
            }
            scale * s
        })
    });
    // transpose of trilinear sampling: scatter with the stencil weights
    let mut g_ab = vec![[0.0; 3]; n];
    for i in 0..n {
        let a = interp::clamped_axes(shape, pos(i));
        for (j, w) in interp::stencil(shape, a) {
            if w != 0.0 {
                for c in 0..3 {
                    g_ab[j][c] += scale * w * gw[c][i];
                }
            }
        }
    }
    (value, Some((g_ab, g_ba)))
}

/// Mean over voxels of `||D(phi_ab o phi_ba) - I||_F^2`.
pub fn gradicon_penalty(u_ab: &DisplacementField, u_ba: &DisplacementField) -> Result<f64> {
    u_ab.grid().ensure_matches(u_ba.grid(), "gradicon")?;
    Ok(penalty(u_ba.grid(), u_ab.data(), u_ba.data(), false).0)
}
