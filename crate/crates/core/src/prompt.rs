//! Spatial prompts: simulation from instance masks, rasterization to input
//! channels, and propagation through displacement fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{warp_binary, DisplacementField};
use crate::grid::{Box3, Grid, Point3};
use crate::volume::{resample_mask_to_grid, BinaryMask, InstanceMask};

/// Radius in voxels of the rasterized point footprint.
pub const BALL_RADIUS: i64 = 5;
/// Largest per-face box expansion in voxels.
pub const MAX_BOX_JITTER: usize = 10;

/// Binary prompt raster on an image (or patch) grid.
pub type PromptChannel = BinaryMask;

#[derive(Debug, Clone, PartialEq)]
pub enum Prompt {
    Point(Point3),
    Box(Box3),
    /// A prior segmentation given as a binary mask on its own grid.
    Mask(BinaryMask),
}

impl Prompt {
    /// Prior-mask prompt from one instance of a label map.
    pub fn prior_mask(m: &InstanceMask, label: u16) -> Result<Prompt> {
        if !m.contains_label(label) {
            return Err(Error::MissingLabel(label));
        }
        Ok(Prompt::Mask(m.binary(label)))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Prompt::Point(_) => "point",
            Prompt::Box(_) => "box",
            Prompt::Mask(_) => "mask",
        }
    }

    /// Point the ROI is centered on: the point, the box center or the mask
    /// centroid. `None` for an empty mask.
    pub fn center(&self) -> Option<Point3> {
        match self {
            Prompt::Point(p) => Some(*p),
            Prompt::Box(b) => Some(b.center()),
            Prompt::Mask(m) => crate::field::binary_centroid(m),
        }
    }
}

/// Lattice offsets `v` with `|v| <= r` (in voxels).
pub fn ball_offsets(r: i64) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for z in -r..=r {
        for y in -r..=r {
            for x in -r..=r {
                if x * x + y * y + z * z <= r * r {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

fn rounded_voxel(grid: &Grid, p: Point3) -> [i64; 3] {
    let v = grid.mm_to_voxel(p);
    std::array::from_fn(|k| v[k].round() as i64)
}

fn paint_ball(grid: &Grid, center: [i64; 3], r: i64) -> BinaryMask {
    let mut m = BinaryMask::empty(*grid);
    for o in ball_offsets(r) {
        let c: [i64; 3] = std::array::from_fn(|k| center[k] + o[k]);
        if (0..3).all(|k| c[k] >= 0 && c[k] < grid.shape[k] as i64) {
            let i = grid.index(c[0] as usize, c[1] as usize, c[2] as usize);
            m.data_mut()[i] = true;
        }
    }
    m
}

fn paint_box(grid: &Grid, b: &Box3) -> BinaryMask {
    const EPS: f64 = 1e-6;
    let lo = grid.mm_to_voxel(b.min);
    let hi = grid.mm_to_voxel(b.max);
    let mut m = BinaryMask::empty(*grid);
    let range = |k: usize| {
        let a = (lo[k] - EPS).ceil().max(0.0);
        let z = (hi[k] + EPS).floor().min((grid.shape[k] - 1) as f64);
        if a > z {
            None
        } else {
            Some((a as usize, z as usize))
        }
    };
    let (Some(rx), Some(ry), Some(rz)) = (range(0), range(1), range(2)) else {
        return m;
    };
    for z in rz.0..=rz.1 {
        for y in ry.0..=ry.1 {
            for x in rx.0..=rx.1 {
                let i = grid.index(x, y, z);
                m.data_mut()[i] = true;
            }
        }
    }
    m
}

/// Rasterize a prompt onto `grid`: ball for points, filled box for boxes,
/// nearest-neighbour resampling for prior masks.
pub fn rasterize(p: &Prompt, grid: &Grid) -> Result<PromptChannel> {
    let ch = match p {
        Prompt::Point(pt) => paint_ball(grid, rounded_voxel(grid, *pt), BALL_RADIUS),
        Prompt::Box(b) => paint_box(grid, b),
        Prompt::Mask(m) => {
            if m.grid() == grid {
                m.clone()
            } else {
                let inst = resample_mask_to_grid(&m.to_instance(1), grid)?;
                inst.binary(1)
            }
        }
    };
    if ch.is_empty() {
        return Err(Error::OutOfBounds(format!(
            "{} prompt does not intersect the grid",
            p.kind()
        )));
    }
    Ok(ch)
}

fn member_voxels(m: &InstanceMask, label: u16) -> Result<Vec<usize>> {
    let v: Vec<usize> = (0..m.data().len()).filter(|&i| m.data()[i] == label).collect();
    if v.is_empty() || label == 0 {
        return Err(Error::MissingLabel(label));
    }
    Ok(v)
}

/// Click on a uniformly chosen voxel of the instance.
pub fn simulate_point(m: &InstanceMask, label: u16, rng: &mut impl rand::Rng) -> Result<(Point3, PromptChannel)> {
    let members = member_voxels(m, label)?;
    let idx = members[rng.gen_range(0..members.len())];
    let g = m.grid();
    let p = g.voxel_center(g.coords(idx));
    let ch = rasterize(&Prompt::Point(p), g)?;
    Ok((p, ch))
}

/// Tight voxel bounding box `(lo, hi)` of an instance.
pub fn tight_bounds(m: &InstanceMask, label: u16) -> Result<([usize; 3], [usize; 3])> {
    let members = member_voxels(m, label)?;
    let g = m.grid();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for i in members {
        let c = g.coords(i);
        for k in 0..3 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    Ok((lo, hi))
}

/// Tight bounding box pushed out by `offsets` voxels
/// (`[-x, +x, -y, +y, -z, +z]`) and clipped to the grid.
pub fn box_with_offsets(m: &InstanceMask, label: u16, offsets: [usize; 6]) -> Result<(Box3, PromptChannel)> {
    let (lo, hi) = tight_bounds(m, label)?;
    let g = m.grid();
    let lo2: [usize; 3] = std::array::from_fn(|k| lo[k].saturating_sub(offsets[2 * k]));
    let hi2: [usize; 3] = std::array::from_fn(|k| (hi[k] + offsets[2 * k + 1]).min(g.shape[k] - 1));
    let b = Box3::new(g.voxel_center(lo2), g.voxel_center(hi2))?;
    let ch = rasterize(&Prompt::Box(b), g)?;
    Ok((b, ch))
}

/// Bounding box with each face expanded by an independent U{0..=10} voxels.
pub fn simulate_box(m: &InstanceMask, label: u16, rng: &mut impl rand::Rng) -> Result<(Box3, PromptChannel)> {
    let offsets: [usize; 6] = std::array::from_fn(|_| rng.gen_range(0..=MAX_BOX_JITTER));
    box_with_offsets(m, label, offsets)
}

/// Carry a point through the forward map: `p + u_fwd(p)`.
pub fn propagate_point(p: Point3, u_fwd: &DisplacementField) -> Result<Point3> {
    match u_fwd.sample_mm(p) {
        Some(d) => Ok(p.offset(d)),
        None => Err(Error::OutOfBounds(format!(
            "point {:?} lies outside the displacement field",
            p.0
        ))),
    }
}

/// Map the eight corners through the forward field and take their bounding
/// box, clipped to the field's grid.
pub fn propagate_box(b: &Box3, u_fwd: &DisplacementField) -> Result<Box3> {
    let g = u_fwd.grid();
    let corners: Vec<Point3> = (0..8)
        .map(|bits| {
            let c = Point3(std::array::from_fn(|k| {
                if bits >> k & 1 == 0 {
                    b.min[k]
                } else {
                    b.max[k]
                }
            }));
            c.offset(u_fwd.sample_mm_clamped(c))
        })
        .collect();
    if !corners.iter().any(|c| g.contains_mm(*c)) {
        return Err(Error::OutOfBounds("every box corner maps outside the grid".into()));
    }
    let bb = Box3::enclosing(&corners).expect("eight corners");
    Ok(Box3 {
        min: g.clamp_mm(bb.min),
        max: g.clamp_mm(bb.max),
    })
}

/// Result of pulling a mask back through a field.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedMask {
    pub mask: BinaryMask,
    pub empty: bool,
}

/// Nearest-neighbour pull-back of a binary mask through `u_bwd`, which lives
/// on the target grid and maps it back to the mask's grid.
pub fn propagate_binary(m: &BinaryMask, u_bwd: &DisplacementField) -> Result<PropagatedMask> {
    let mask = warp_binary(m, u_bwd)?;
    let empty = mask.is_empty();
    Ok(PropagatedMask { mask, empty })
}

/// [`propagate_binary`] for one instance of a label map.
pub fn propagate_mask(m: &InstanceMask, label: u16, u_bwd: &DisplacementField) -> Result<PropagatedMask> {
    if !m.contains_label(label) {
        return Err(Error::MissingLabel(label));
    }
    propagate_binary(&m.binary(label), u_bwd)
}

/// File-level prompt description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PromptRecord {
    Point {
        mm: [f64; 3],
        #[serde(default)]
        timepoint: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<u16>,
    },
    Box {
        min_mm: [f64; 3],
        max_mm: [f64; 3],
        #[serde(default)]
        timepoint: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<u16>,
    },
    Mask {
        mask_path: String,
        label: u16,
        #[serde(default)]
        timepoint: usize,
    },
}

impl PromptRecord {
    /// Record for a geometric prompt; mask prompts need a path and are built
    /// directly.
    pub fn from_prompt(p: &Prompt, timepoint: usize, label: Option<u16>) -> Option<PromptRecord> {
        match p {
            Prompt::Point(pt) => Some(PromptRecord::Point {
                mm: pt.0,
                timepoint,
                label,
            }),
            Prompt::Box(b) => Some(PromptRecord::Box {
                min_mm: b.min.0,
                max_mm: b.max.0,
                timepoint,
                label,
            }),
            Prompt::Mask(_) => None,
        }
    }
}
