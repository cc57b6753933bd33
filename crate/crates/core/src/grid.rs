//! Grid metadata and physical-space primitives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in physical (mm) coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3(pub [f64; 3]);

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3([x, y, z])
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let mut s = 0.0;
        for k in 0..3 {
            let d = self.0[k] - other.0[k];
            s += d * d;
        }
        s.sqrt()
    }

    pub fn offset(&self, d: [f64; 3]) -> Point3 {
        Point3([self.0[0] + d[0], self.0[1] + d[1], self.0[2] + d[2]])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for Point3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Axis-aligned box in mm, `min <= max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub min: Point3,
    pub max: Point3,
}

impl Box3 {
    pub fn new(min: Point3, max: Point3) -> Result<Self> {
        if (0..3).any(|k| !(min[k] <= max[k])) {
            return Err(Error::InvalidInput(format!(
                "box min {:?} exceeds max {:?}",
                min.0, max.0
            )));
        }
        Ok(Box3 { min, max })
    }

    pub fn center(&self) -> Point3 {
        Point3(std::array::from_fn(|k| 0.5 * (self.min[k] + self.max[k])))
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    /// Bounding box of a set of points; `None` for an empty set.
    pub fn enclosing<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Option<Box3> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (mut lo, mut hi) = (first.0, first.0);
        for p in it {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Some(Box3 {
            min: Point3(lo),
            max: Point3(hi),
        })
    }
}

/// Shape, spacing and origin of a voxel grid.
///
/// Voxel `(i, j, k)` has its center at `origin + (i, j, k) * spacing`; data
/// is stored x-fastest, so the flat index is `i + nx * (j + ny * k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub shape: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Grid {
    pub fn new(shape: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let g = Grid {
            shape,
            spacing,
            origin,
        };
        g.validate()?;
        Ok(g)
    }

    /// Unit-spacing grid at the origin.
    pub fn unit(shape: [usize; 3]) -> Self {
        Grid {
            shape,
            spacing: [1.0; 3],
            origin: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape.iter().any(|&n| n == 0) {
            return Err(Error::InvalidInput(format!(
                "grid shape {:?} has an empty axis",
                self.shape
            )));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "grid spacing {:?} must be positive",
                self.spacing
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidInput("grid origin is not finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1] * self.shape[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.shape[0] * (y + self.shape[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.shape[0];
        let ny = self.shape[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Stride of one step along `axis` in the flat array.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[0] * self.shape[1],
        }
    }

    pub fn voxel_to_mm(&self, v: [f64; 3]) -> Point3 {
        Point3(std::array::from_fn(|k| self.origin[k] + v[k] * self.spacing[k]))
    }

    pub fn mm_to_voxel(&self, p: Point3) -> [f64; 3] {
        std::array::from_fn(|k| (p[k] - self.origin[k]) / self.spacing[k])
    }

    #[inline]
    pub fn voxel_center(&self, c: [usize; 3]) -> Point3 {
        Point3(std::array::from_fn(|k| {
            self.origin[k] + c[k] as f64 * self.spacing[k]
        }))
    }

    /// Nearest voxel to a mm point, or `None` when it falls outside the grid.
    pub fn nearest_voxel(&self, p: Point3) -> Option<[usize; 3]> {
        let v = self.mm_to_voxel(p);
        let mut out = [0usize; 3];
        for k in 0..3 {
            let r = v[k].round();
            if !(r >= 0.0 && r <= (self.shape[k] - 1) as f64) {
                return None;
            }
            out[k] = r as usize;
        }
        Some(out)
    }

    /// Nearest voxel after clamping to the grid.
    pub fn clamped_voxel(&self, p: Point3) -> [usize; 3] {
        let v = self.mm_to_voxel(p);
        std::array::from_fn(|k| {
            let r = v[k].round();
            if r.is_nan() || r < 0.0 {
                0
            } else {
                (r as usize).min(self.shape[k] - 1)
            }
        })
    }

    /// True when `p` lies within the half-voxel-padded extent of the grid.
    pub fn contains_mm(&self, p: Point3) -> bool {
        let v = self.mm_to_voxel(p);
        (0..3).all(|k| v[k] >= -0.5 && v[k] <= self.shape[k] as f64 - 0.5)
    }

    /// Physical box spanned by the voxel centers.
    pub fn center_bounds(&self) -> Box3 {
        Box3 {
            min: Point3(self.origin),
            max: self.voxel_center([self.shape[0] - 1, self.shape[1] - 1, self.shape[2] - 1]),
        }
    }

    /// Clamp a point into the voxel-center bounding box.
    pub fn clamp_mm(&self, p: Point3) -> Point3 {
        let b = self.center_bounds();
        Point3(std::array::from_fn(|k| p[k].clamp(b.min[k], b.max[k])))
    }

    /// Metadata equality up to float32 representation (the NIfTI header
    /// stores spacing and origin as `f32`).
    pub fn matches(&self, other: &Grid) -> bool {
        if self.shape != other.shape {
            return false;
        }
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs()));
        (0..3).all(|k| {
            close(self.spacing[k], other.spacing[k]) && close(self.origin[k], other.origin[k])
        })
    }

    pub fn ensure_matches(&self, other: &Grid, what: &str) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {:?}/{:?}/{:?} vs {:?}/{:?}/{:?}",
                self.shape, self.spacing, self.origin, other.shape, other.spacing, other.origin
            )))
        }
    }
}
