//! Voxel overlap and surface agreement between binary masks.

use crate::error::Result;
use crate::field::distance_transform;
use crate::volume::BinaryMask;

/// `2|A∩B| / (|A|+|B|)`; 1 when both are empty.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.grid().ensure_matches(b.grid(), "dice")?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        na += x as usize;
        nb += y as usize;
        inter += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Foreground voxels with a 6-neighbour in the background or outside the
/// grid.
pub fn surface(m: &BinaryMask) -> BinaryMask {
    let g = *m.grid();
    let d = m.data();
    let mut out = BinaryMask::empty(g);
    for i in 0..g.len() {
        if !d[i] {
            continue;
        }
        let c = g.coords(i);
        let edge = (0..3).any(|k| {
            let s = g.stride(k);
            c[k] == 0 || c[k] + 1 == g.shape[k] || !d[i - s] || !d[i + s]
        });
        out.data_mut()[i] = edge;
    }
    out
}

/// Normalized surface Dice at tolerance `tol_mm`: the fraction of both
/// surfaces lying within `tol_mm` of the other surface. 1 when both masks
/// are empty, 0 when exactly one is.
pub fn nsd(a: &BinaryMask, b: &BinaryMask, tol_mm: f64) -> Result<f64> {
    a.grid().ensure_matches(b.grid(), "nsd")?;
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let sa = surface(a);
    let sb = surface(b);
    let da = distance_transform(&sa)?;
    let db = distance_transform(&sb)?;
    let within = |s: &BinaryMask, d: &[f64]| {
        s.data()
            .iter()
            .zip(d)
            .filter(|(&on, &dist)| on && dist <= tol_mm)
            .count()
    };
    let hit = within(&sa, &db) + within(&sb, &da);
    Ok(hit as f64 / (sa.count() + sb.count()) as f64)
}
