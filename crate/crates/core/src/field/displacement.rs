use crate::error::{Error, Result};
use crate::field::interp;
use crate::grid::{Grid, Point3};
use crate::par;

/// Per-voxel displacement `u(x)` in mm; the coordinate map is
/// `phi(x) = x + u(x)` with `x` the voxel center in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    grid: Grid,
    data: Vec<[f64; 3]>,
}

impl DisplacementField {
    pub fn new(grid: Grid, data: Vec<[f64; 3]>) -> Result<Self> {
        grid.validate()?;
        if data.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field length {} does not match grid {:?}",
                data.len(),
                grid.shape
            )));
        }
        if data.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidInput("displacement field is not finite".into()));
        }
        Ok(DisplacementField { grid, data })
    }

    pub fn zeros(grid: Grid) -> Self {
        DisplacementField {
            data: vec![[0.0; 3]; grid.len()],
            grid,
        }
    }

    pub fn uniform(grid: Grid, t: [f64; 3]) -> Self {
        DisplacementField {
            data: vec![t; grid.len()],
            grid,
        }
    }

    /// Build from a function of the voxel center (mm).
    pub fn from_fn<F>(grid: Grid, f: F) -> Result<Self>
    where
        F: Fn(Point3) -> [f64; 3] + Sync + Send,
    {
        let data = par::map_indices(grid.len(), |i| f(grid.voxel_center(grid.coords(i))));
        DisplacementField::new(grid, data)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn into_data(self) -> Vec<[f64; 3]> {
        self.data
    }

    /// Split into three component arrays.
    pub fn components(&self) -> [Vec<f64>; 3] {
        std::array::from_fn(|k| self.data.iter().map(|v| v[k]).collect())
    }

    pub fn from_components(grid: Grid, c: [&[f64]; 3]) -> Result<Self> {
        if c.iter().any(|a| a.len() != grid.len()) {
            return Err(Error::InvalidInput("component length mismatch".into()));
        }
        let data = (0..grid.len()).map(|i| [c[0][i], c[1][i], c[2][i]]).collect();
        DisplacementField::new(grid, data)
    }

    /// Trilinear sample at a mm point; `None` outside the voxel-center box.
    pub fn sample_mm(&self, p: Point3) -> Option<[f64; 3]> {
        interp::trilinear_vec(self.grid.shape, &self.data, self.grid.mm_to_voxel(p))
    }

    /// Border-replicating trilinear sample at a mm point.
    pub fn sample_mm_clamped(&self, p: Point3) -> [f64; 3] {
        interp::trilinear_vec_clamped(self.grid.shape, &self.data, self.grid.mm_to_voxel(p))
    }

    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(norm).fold(0.0, f64::max)
    }

    pub fn mean_norm(&self) -> f64 {
        par::sum(self.data.len(), |i| norm(&self.data[i])) / self.data.len() as f64
    }

    pub fn negated(&self) -> DisplacementField {
        self.scaled(-1.0)
    }

    pub fn scaled(&self, s: f64) -> DisplacementField {
        DisplacementField {
            grid: self.grid,
            data: self.data.iter().map(|v| [v[0] * s, v[1] * s, v[2] * s]).collect(),
        }
    }

    /// Resample onto another grid (border replicate); values stay in mm.
    pub fn resample_to(&self, dst: &Grid) -> DisplacementField {
        if self.grid == *dst {
            return self.clone();
        }
        let data = par::map_indices(dst.len(), |i| {
            self.sample_mm_clamped(dst.voxel_center(dst.coords(i)))
        });
        DisplacementField { grid: *dst, data }
    }
}

fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}
