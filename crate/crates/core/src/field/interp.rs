//! Trilinear and nearest-neighbour sampling on x-fastest lattices.
//!
//! Coordinates are continuous voxel indices. "Strict" samplers return `None`
//! outside `[0, n-1]` on any axis; "clamped" samplers replicate the border
//! and report a zero derivative along clamped axes.

const EDGE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Axis {
    pub i0: usize,
    pub i1: usize,
    pub f: f64,
    /// Whether the coordinate moved the sample (false when clamped or n == 1).
    pub live: bool,
}

#[inline]
fn axis_from(c: f64, n: usize, live: bool) -> Axis {
    if n == 1 {
        return Axis {
            i0: 0,
            i1: 0,
            f: 0.0,
            live: false,
        };
    }
    let fl = c.floor();
    let mut i0 = if fl < 0.0 { 0 } else { fl as usize };
    if i0 > n - 2 {
        i0 = n - 2;
    }
    Axis {
        i0,
        i1: i0 + 1,
        f: c - i0 as f64,
        live,
    }
}

#[inline]
pub(crate) fn axis_strict(c: f64, n: usize) -> Option<Axis> {
    let hi = (n - 1) as f64;
    if !(c >= -EDGE_TOL && c <= hi + EDGE_TOL) {
        return None;
    }
    Some(axis_from(c.clamp(0.0, hi), n, true))
}

#[inline]
pub(crate) fn axis_clamped(c: f64, n: usize) -> Axis {
    let hi = (n - 1) as f64;
    if c.is_nan() {
        return axis_from(0.0, n, false);
    }
    if c < 0.0 {
        axis_from(0.0, n, false)
    } else if c > hi {
        axis_from(hi, n, false)
    } else {
        axis_from(c, n, true)
    }
}

#[inline]
fn flat(shape: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + shape[0] * (y + shape[1] * z)
}

/// Trilinear blend of eight corner values.
#[inline]
pub(crate) fn blend<F: Fn(usize) -> f64>(shape: [usize; 3], a: [Axis; 3], get: F) -> f64 {
    let [ax, ay, az] = a;
    let c = |x, y, z| get(flat(shape, x, y, z));
    let x00 = (1.0 - ax.f) * c(ax.i0, ay.i0, az.i0) + ax.f * c(ax.i1, ay.i0, az.i0);
    let x10 = (1.0 - ax.f) * c(ax.i0, ay.i1, az.i0) + ax.f * c(ax.i1, ay.i1, az.i0);
    let x01 = (1.0 - ax.f) * c(ax.i0, ay.i0, az.i1) + ax.f * c(ax.i1, ay.i0, az.i1);
    let x11 = (1.0 - ax.f) * c(ax.i0, ay.i1, az.i1) + ax.f * c(ax.i1, ay.i1, az.i1);
    let y0 = (1.0 - ay.f) * x00 + ay.f * x10;
    let y1 = (1.0 - ay.f) * x01 + ay.f * x11;
    (1.0 - az.f) * y0 + az.f * y1
}

/// Value and derivative with respect to the voxel coordinate.
#[inline]
pub(crate) fn blend_grad<F: Fn(usize) -> f64>(
    shape: [usize; 3],
    a: [Axis; 3],
    get: F,
) -> (f64, [f64; 3]) {
    let [ax, ay, az] = a;
    let c = |x, y, z| get(flat(shape, x, y, z));
    let v000 = c(ax.i0, ay.i0, az.i0);
    let v100 = c(ax.i1, ay.i0, az.i0);
    let v010 = c(ax.i0, ay.i1, az.i0);
    let v110 = c(ax.i1, ay.i1, az.i0);
    let v001 = c(ax.i0, ay.i0, az.i1);
    let v101 = c(ax.i1, ay.i0, az.i1);
    let v011 = c(ax.i0, ay.i1, az.i1);
    let v111 = c(ax.i1, ay.i1, az.i1);
    let (fx, fy, fz) = (ax.f, ay.f, az.f);
    let x00 = (1.0 - fx) * v000 + fx * v100;
    let x10 = (1.0 - fx) * v010 + fx * v110;
    let x01 = (1.0 - fx) * v001 + fx * v101;
    let x11 = (1.0 - fx) * v011 + fx * v111;
    let y0 = (1.0 - fy) * x00 + fy * x10;
    let y1 = (1.0 - fy) * x01 + fy * x11;
    let value = (1.0 - fz) * y0 + fz * y1;

    let mut g = [0.0; 3];
    if ax.live {
        let d00 = v100 - v000;
        let d10 = v110 - v010;
        let d01 = v101 - v001;
        let d11 = v111 - v011;
        let d0 = (1.0 - fy) * d00 + fy * d10;
        let d1 = (1.0 - fy) * d01 + fy * d11;
        g[0] = (1.0 - fz) * d0 + fz * d1;
    }
    if ay.live {
        g[1] = (1.0 - fz) * (x10 - x00) + fz * (x11 - x01);
    }
    if az.live {
        g[2] = y1 - y0;
    }
    (value, g)
}

/// The eight (flat index, weight) pairs of a trilinear stencil.
#[inline]
pub(crate) fn stencil(shape: [usize; 3], a: [Axis; 3]) -> [(usize, f64); 8] {
    let [ax, ay, az] = a;
    let wx = [(ax.i0, 1.0 - ax.f), (ax.i1, ax.f)];
    let wy = [(ay.i0, 1.0 - ay.f), (ay.i1, ay.f)];
    let wz = [(az.i0, 1.0 - az.f), (az.i1, az.f)];
    let mut out = [(0usize, 0.0f64); 8];
    let mut n = 0;
    for &(z, w3) in &wz {
        for &(y, w2) in &wy {
            for &(x, w1) in &wx {
                out[n] = (flat(shape, x, y, z), w1 * w2 * w3);
                n += 1;
            }
        }
    }
    out
}

#[inline]
pub(crate) fn clamped_axes(shape: [usize; 3], c: [f64; 3]) -> [Axis; 3] {
    [
        axis_clamped(c[0], shape[0]),
        axis_clamped(c[1], shape[1]),
        axis_clamped(c[2], shape[2]),
    ]
}

#[inline]
pub(crate) fn strict_axes(shape: [usize; 3], c: [f64; 3]) -> Option<[Axis; 3]> {
    Some([
        axis_strict(c[0], shape[0])?,
        axis_strict(c[1], shape[1])?,
        axis_strict(c[2], shape[2])?,
    ])
}

/// Strict trilinear sample of scalar data.
pub fn trilinear<T: Copy + Into<f64>>(shape: [usize; 3], data: &[T], c: [f64; 3]) -> Option<f64> {
    let a = strict_axes(shape, c)?;
    Some(blend(shape, a, |i| data[i].into()))
}

/// Border-replicating trilinear sample of scalar data.
pub fn trilinear_clamped<T: Copy + Into<f64>>(shape: [usize; 3], data: &[T], c: [f64; 3]) -> f64 {
    blend(shape, clamped_axes(shape, c), |i| data[i].into())
}

/// Border-replicating trilinear sample of a vector lattice.
pub fn trilinear_vec_clamped(shape: [usize; 3], data: &[[f64; 3]], c: [f64; 3]) -> [f64; 3] {
    let a = clamped_axes(shape, c);
    std::array::from_fn(|k| blend(shape, a, |i| data[i][k]))
}

/// Strict trilinear sample of a vector lattice.
pub fn trilinear_vec(shape: [usize; 3], data: &[[f64; 3]], c: [f64; 3]) -> Option<[f64; 3]> {
    let a = strict_axes(shape, c)?;
    Some(std::array::from_fn(|k| blend(shape, a, |i| data[i][k])))
}

/// Nearest-neighbour lookup; `None` outside the grid (half-voxel padded).
pub fn nearest<T: Copy>(shape: [usize; 3], data: &[T], c: [f64; 3]) -> Option<T> {
    let mut idx = [0usize; 3];
    for k in 0..3 {
        let r = c[k].round();
        if !(r >= 0.0 && r <= (shape[k] - 1) as f64) {
            return None;
        }
        idx[k] = r as usize;
    }
    Some(data[flat(shape, idx[0], idx[1], idx[2])])
}

/// Nearest-neighbour lookup with border clamping.
pub fn nearest_clamped<T: Copy>(shape: [usize; 3], data: &[T], c: [f64; 3]) -> T {
    let idx: [usize; 3] = std::array::from_fn(|k| {
        let r = c[k].round();
        if r.is_nan() || r < 0.0 {
            0
        } else {
            (r as usize).min(shape[k] - 1)
        }
    });
    data[flat(shape, idx[0], idx[1], idx[2])]
}
