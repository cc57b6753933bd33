//! Connected-component labeling and centroids.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Point3;
use crate::volume::{BinaryMask, InstanceMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbours only.
    #[serde(rename = "6")]
    Six,
    /// Face, edge and corner neighbours.
    #[default]
    #[serde(rename = "26")]
    TwentySix,
}

impl Connectivity {
    pub fn offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let l1 = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => l1 == 1,
                        Connectivity::TwentySix => l1 > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

impl std::str::FromStr for Connectivity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "6" => Ok(Connectivity::Six),
            "26" => Ok(Connectivity::TwentySix),
            _ => Err(Error::InvalidInput(format!("connectivity must be 6 or 26, got {s}"))),
        }
    }
}

/// Label connected foreground regions; instances are numbered in order of
/// their first voxel in x-fastest scan order.
pub fn connected_components(m: &BinaryMask, conn: Connectivity) -> Result<InstanceMask> {
    let g = *m.grid();
    let offsets = conn.offsets();
    let mut labels = vec![0u16; g.len()];
    let mut next: u32 = 0;
    let mut queue = VecDeque::new();
    for start in 0..g.len() {
        if !m.data()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        if next > u16::MAX as u32 {
            return Err(Error::InvalidInput("more than 65535 components".into()));
        }
        let label = next as u16;
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let c = g.coords(i);
            for o in &offsets {
                let n: [i64; 3] = std::array::from_fn(|k| c[k] as i64 + o[k]);
                if (0..3).any(|k| n[k] < 0 || n[k] >= g.shape[k] as i64) {
                    continue;
                }
                let j = g.index(n[0] as usize, n[1] as usize, n[2] as usize);
                if m.data()[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
    }
    InstanceMask::new(g, labels, next as u16)
}

/// Mean voxel-center position (mm) of one instance.
pub fn centroid(m: &InstanceMask, label: u16) -> Result<Point3> {
    let g = m.grid();
    let mut acc = [0.0; 3];
    let mut n = 0usize;
    for (i, &l) in m.data().iter().enumerate() {
        if l == label && label != 0 {
            let p = g.voxel_center(g.coords(i));
            for k in 0..3 {
                acc[k] += p[k];
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::MissingLabel(label));
    }
    Ok(Point3(acc.map(|a| a / n as f64)))
}

/// Centroid of a binary mask; `None` when empty.
pub fn binary_centroid(m: &BinaryMask) -> Option<Point3> {
    let g = m.grid();
    let mut acc = [0.0; 3];
    let mut n = 0usize;
    for (i, &b) in m.data().iter().enumerate() {
        if b {
            let p = g.voxel_center(g.coords(i));
            for k in 0..3 {
                acc[k] += p[k];
            }
            n += 1;
        }
    }
    (n > 0).then(|| Point3(acc.map(|a| a / n as f64)))
}
