//! Grid-aligned scalar volumes and label masks, plus the grid-level
//! operations on them: resampling, intensity normalization and ROI cropping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::interp;
use crate::grid::{Grid, Point3};
use crate::par;

/// Dense scalar image on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    grid: Grid,
    data: Vec<f32>,
}

impl Volume {
    pub fn new(grid: Grid, data: Vec<f32>) -> Result<Self> {
        grid.validate()?;
        if data.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "data length {} does not match grid {:?}",
                data.len(),
                grid.shape
            )));
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::NanVoxel);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("volume contains infinite values".into()));
        }
        Ok(Volume { grid, data })
    }

    pub fn filled(grid: Grid, value: f32) -> Self {
        Volume {
            data: vec![value; grid.len()],
            grid,
        }
    }

    /// Build from a function of the voxel index.
    pub fn from_fn<F>(grid: Grid, f: F) -> Result<Self>
    where
        F: Fn([usize; 3]) -> f32 + Sync + Send,
    {
        let data = par::map_indices(grid.len(), |i| f(grid.coords(i)));
        Volume::new(grid, data)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.grid.index(x, y, z)]
    }

    /// Apply `f` voxelwise, keeping the grid.
    pub fn map<F: Fn(f32) -> f32 + Sync + Send>(&self, f: F) -> Result<Volume> {
        let data = par::map_slice(&self.data, |&v| f(v));
        Volume::new(self.grid, data)
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    /// Mean and population standard deviation, accumulated in `f64`.
    pub fn mean_std(&self) -> (f64, f64) {
        let n = self.data.len();
        let mean = par::sum(n, |i| self.data[i] as f64) / n as f64;
        let var = par::sum(n, |i| {
            let d = self.data[i] as f64 - mean;
            d * d
        }) / n as f64;
        (mean, var.sqrt())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn from_f64(grid: Grid, data: &[f64]) -> Result<Volume> {
        Volume::new(grid, data.iter().map(|&v| v as f32).collect())
    }

    /// Border-replicating trilinear sample at a mm position.
    pub fn sample_mm(&self, p: Point3) -> f64 {
        interp::trilinear_clamped(self.grid.shape, &self.data, self.grid.mm_to_voxel(p))
    }
}

/// Label image: `0` is background, `1..=K` are lesion instances.
///
/// `num_instances` is the declared label range `K`. Labels inside that range
/// may be absent (a tracked lesion can vanish at a follow-up while keeping
/// its identity), so use [`InstanceMask::labels`] for the labels actually
/// present.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    grid: Grid,
    data: Vec<u16>,
    num_instances: u16,
}

impl InstanceMask {
    pub fn new(grid: Grid, data: Vec<u16>, num_instances: u16) -> Result<Self> {
        grid.validate()?;
        if data.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "mask length {} does not match grid {:?}",
                data.len(),
                grid.shape
            )));
        }
        if let Some(&bad) = data.iter().find(|&&l| l > num_instances) {
            return Err(Error::InvalidInput(format!(
                "label {bad} exceeds declared instance count {num_instances}"
            )));
        }
        Ok(InstanceMask {
            grid,
            data,
            num_instances,
        })
    }

    /// Construct with `K` set to the largest label present.
    pub fn from_labels(grid: Grid, data: Vec<u16>) -> Result<Self> {
        let k = data.iter().copied().max().unwrap_or(0);
        InstanceMask::new(grid, data, k)
    }

    pub fn empty(grid: Grid) -> Self {
        InstanceMask {
            data: vec![0; grid.len()],
            grid,
            num_instances: 0,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u16> {
        self.data
    }

    pub fn num_instances(&self) -> u16 {
        self.num_instances
    }

    /// Sorted labels (excluding background) that occur at least once.
    pub fn labels(&self) -> Vec<u16> {
        let mut seen = vec![false; self.num_instances as usize + 1];
        for &l in &self.data {
            seen[l as usize] = true;
        }
        (1..=self.num_instances).filter(|&l| seen[l as usize]).collect()
    }

    pub fn count(&self, label: u16) -> usize {
        self.data.iter().filter(|&&l| l == label).count()
    }

    pub fn contains_label(&self, label: u16) -> bool {
        label != 0 && self.data.contains(&label)
    }

    pub fn binary(&self, label: u16) -> BinaryMask {
        BinaryMask {
            grid: self.grid,
            data: self.data.iter().map(|&l| l == label).collect(),
        }
    }

    /// Foreground of all instances.
    pub fn foreground(&self) -> BinaryMask {
        BinaryMask {
            grid: self.grid,
            data: self.data.iter().map(|&l| l != 0).collect(),
        }
    }
}

/// Binary voxel mask on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    grid: Grid,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(grid: Grid, data: Vec<bool>) -> Result<Self> {
        grid.validate()?;
        if data.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "mask length {} does not match grid {:?}",
                data.len(),
                grid.shape
            )));
        }
        Ok(BinaryMask { grid, data })
    }

    pub fn empty(grid: Grid) -> Self {
        BinaryMask {
            data: vec![false; grid.len()],
            grid,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn to_instance(&self, label: u16) -> InstanceMask {
        InstanceMask {
            grid: self.grid,
            data: self.data.iter().map(|&b| if b { label } else { 0 }).collect(),
            num_instances: if self.is_empty() { 0 } else { label },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    Trilinear,
    Nearest,
}

/// Grid with the same origin whose spacing is `target` and whose extent
/// covers the source extent: `shape = ceil(n * spacing / target)`.
pub fn grid_for_spacing(src: &Grid, target: [f64; 3]) -> Result<Grid> {
    if target.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "target spacing {target:?} must be positive"
        )));
    }
    let mut shape = [0usize; 3];
    for k in 0..3 {
        let extent = src.shape[k] as f64 * src.spacing[k];
        let n = (extent / target[k] - 1e-9).ceil();
        if n < 1.0 {
            return Err(Error::InvalidInput(format!(
                "resampling axis {k} to spacing {} yields an empty grid",
                target[k]
            )));
        }
        shape[k] = n as usize;
    }
    Grid::new(shape, target, src.origin)
}

/// Continuous source-voxel coordinate of a destination voxel.
#[inline]
fn src_coord(src: &Grid, dst: &Grid, c: [usize; 3]) -> [f64; 3] {
    if src.origin == dst.origin {
        // keeps identity resampling bit-exact
        std::array::from_fn(|k| c[k] as f64 * dst.spacing[k] / src.spacing[k])
    } else {
        src.mm_to_voxel(dst.voxel_center(c))
    }
}

/// Resample a volume onto a new spacing.
pub fn resample(v: &Volume, target_spacing: [f64; 3], mode: Interp) -> Result<Volume> {
    let dst = grid_for_spacing(v.grid(), target_spacing)?;
    resample_to_grid(v, &dst, mode)
}

/// Resample a volume onto an arbitrary axis-aligned grid (border replicate).
pub fn resample_to_grid(v: &Volume, dst: &Grid, mode: Interp) -> Result<Volume> {
    let src = *v.grid();
    let data = par::map_indices(dst.len(), |i| {
        let c = src_coord(&src, dst, dst.coords(i));
        match mode {
            Interp::Trilinear => interp::trilinear_clamped(src.shape, v.data(), c) as f32,
            Interp::Nearest => interp::nearest_clamped(src.shape, v.data(), c),
        }
    });
    Volume::new(*dst, data)
}

/// Nearest-neighbour resampling of a label mask onto a new spacing.
pub fn resample_mask(m: &InstanceMask, target_spacing: [f64; 3]) -> Result<InstanceMask> {
    let dst = grid_for_spacing(m.grid(), target_spacing)?;
    resample_mask_to_grid(m, &dst)
}

/// Nearest-neighbour resampling onto `dst`; voxels outside the source are 0.
pub fn resample_mask_to_grid(m: &InstanceMask, dst: &Grid) -> Result<InstanceMask> {
    let src = *m.grid();
    let data = par::map_indices(dst.len(), |i| {
        let c = src_coord(&src, dst, dst.coords(i));
        interp::nearest(src.shape, m.data(), c).unwrap_or(0)
    });
    InstanceMask::new(*dst, data, m.num_instances())
}

/// Z-score normalization to zero mean and unit (population) std.
pub fn znormalize(v: &Volume) -> Result<Volume> {
    let (mean, std) = v.mean_std();
    if !(std > 0.0) || v.min() == v.max() {
        return Err(Error::ConstantVolume);
    }
    let out = v.map(|x| ((x as f64 - mean) / std) as f32)?;
    // one refinement pass absorbs the f32 rounding of the first
    let (m2, s2) = out.mean_std();
    out.map(|x| ((x as f64 - m2) / s2) as f32)
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f32], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let f = pos - lo as f64;
    sorted[lo] as f64 * (1.0 - f) + sorted[hi] as f64 * f
}

/// CT-style normalization: clip to the volume's own [0.5, 99.5] percentile
/// window, then z-score.
pub fn ct_normalize(v: &Volume) -> Result<Volume> {
    if v.min() == v.max() {
        return Err(Error::ConstantVolume);
    }
    let mut sorted = v.data().to_vec();
    sorted.sort_by(f32::total_cmp);
    let lo = percentile(&sorted, 0.5) as f32;
    let hi = percentile(&sorted, 99.5) as f32;
    let clipped = v.map(|x| x.clamp(lo, hi))?;
    znormalize(&clipped)
}

/// Where a cropped patch sits inside its source grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub source: Grid,
    /// Source voxel index of patch voxel (0,0,0); may be negative.
    pub start: [i64; 3],
    pub size: [usize; 3],
}

impl Placement {
    /// Grid of the patch itself.
    pub fn patch_grid(&self) -> Grid {
        Grid {
            shape: self.size,
            spacing: self.source.spacing,
            origin: std::array::from_fn(|k| {
                self.source.origin[k] + self.start[k] as f64 * self.source.spacing[k]
            }),
        }
    }

    #[inline]
    fn source_index(&self, c: [usize; 3]) -> Option<usize> {
        let mut s = [0usize; 3];
        for k in 0..3 {
            let v = self.start[k] + c[k] as i64;
            if v < 0 || v >= self.source.shape[k] as i64 {
                return None;
            }
            s[k] = v as usize;
        }
        Some(self.source.index(s[0], s[1], s[2]))
    }
}

/// Place a `size` patch centered on the voxel nearest `center`.
pub fn placement_at(grid: &Grid, center: Point3, size: [usize; 3]) -> Result<Placement> {
    if size.iter().any(|&s| s == 0) {
        return Err(Error::InvalidInput(format!("ROI size {size:?} has an empty axis")));
    }
    if !grid.contains_mm(center) {
        return Err(Error::OutOfBounds(format!(
            "ROI center {:?} lies outside the volume",
            center.0
        )));
    }
    let c = grid.clamped_voxel(center);
    Ok(Placement {
        source: *grid,
        start: std::array::from_fn(|k| c[k] as i64 - (size[k] / 2) as i64),
        size,
    })
}

fn crop_data<T: Copy + Send + Sync>(p: &Placement, src: &[T], pad: T) -> Vec<T> {
    let pg = Grid::unit(p.size);
    par::map_indices(pg.len(), |i| match p.source_index(pg.coords(i)) {
        Some(s) => src[s],
        None => pad,
    })
}

/// Crop a `size_vox` ROI centered at `center_mm`; out-of-volume voxels take
/// the volume minimum.
pub fn crop_roi(v: &Volume, center_mm: Point3, size_vox: [usize; 3]) -> Result<(Volume, Placement)> {
    let p = placement_at(v.grid(), center_mm, size_vox)?;
    let data = crop_data(&p, v.data(), v.min());
    Ok((Volume::new(p.patch_grid(), data)?, p))
}

/// Crop a binary mask with the given placement (padding is background).
pub fn crop_binary(m: &BinaryMask, p: &Placement) -> Result<BinaryMask> {
    m.grid().ensure_matches(&p.source, "crop source")?;
    BinaryMask::new(p.patch_grid(), crop_data(p, m.data(), false))
}

/// Paste a patch-grid mask back into its source grid; voxels outside the ROI
/// are background.
pub fn paste_back(patch: &BinaryMask, p: &Placement) -> Result<BinaryMask> {
    if patch.grid().shape != p.size {
        return Err(Error::GridMismatch(format!(
            "patch shape {:?} differs from placement size {:?}",
            patch.grid().shape,
            p.size
        )));
    }
    let mut out = BinaryMask::empty(p.source);
    let pg = Grid::unit(p.size);
    for i in 0..pg.len() {
        if patch.data()[i] {
            if let Some(s) = p.source_index(pg.coords(i)) {
                out.data_mut()[s] = true;
            }
        }
    }
    Ok(out)
}
