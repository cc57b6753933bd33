//! Prompted patch segmenters.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{connected_components, distance_transform, Connectivity};
use crate::prompt::PromptChannel;
use crate::volume::{BinaryMask, Volume};

/// Conditions worth surfacing next to a segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegFlag {
    /// Nothing was segmented.
    Empty,
    /// The mask reaches the edge of the patch and was cut there.
    ReachedRoiBound,
    /// The prompt statistics or the growth behaviour were degenerate.
    LowConfidence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Binary mask on the patch grid.
    pub mask: BinaryMask,
    pub flags: Vec<SegFlag>,
}

/// `(image patch, prompt channel) -> mask on the patch grid`.
pub trait Segmenter: Sync {
    fn name(&self) -> &str;
    fn segment(&self, patch: &Volume, channel: &PromptChannel) -> Result<Segmentation>;
}

fn check_inputs(patch: &Volume, channel: &PromptChannel) -> Result<()> {
    if patch.grid() != channel.grid() {
        return Err(Error::Segmenter(format!(
            "prompt channel grid {:?} differs from patch grid {:?}",
            channel.grid().shape,
            patch.grid().shape
        )));
    }
    Ok(())
}

/// Returns the prompt channel unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentitySegmenter;

impl Segmenter for IdentitySegmenter {
    fn name(&self) -> &str {
        "identity"
    }

    fn segment(&self, patch: &Volume, channel: &PromptChannel) -> Result<Segmentation> {
        check_inputs(patch, channel)?;
        let flags = if channel.is_empty() { vec![SegFlag::Empty] } else { vec![] };
        Ok(Segmentation {
            mask: channel.clone(),
            flags,
        })
    }
}

/// Intensity region growing seeded by the prompt.
///
/// Statistics come from the deeper half of the prompt (median and scaled
/// MAD), so a prompt that spills into the background does not widen the
/// band. The band half-width is `k·spread`, or half the distance to the
/// median of a thin shell around the prompt when that is larger.
/// Growth is 6-connected within the band, followed by a closing
/// with the radius-1 cross and selection of the component that overlaps the
/// prompt most.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSegmenter {
    pub k: f64,
    pub closing_radius: usize,
}

impl Default for BaselineSegmenter {
    fn default() -> Self {
        BaselineSegmenter {
            k: 2.5,
            closing_radius: 1,
        }
    }
}

/// Consistency factor turning a MAD into a normal standard deviation.
const MAD_TO_STD: f64 = 1.4826;

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Deeper half of the channel: voxels at least half the maximum distance
/// from its outside. The whole channel when it has no outside.
fn channel_core(channel: &BinaryMask) -> Result<Vec<bool>> {
    let outside = BinaryMask::new(*channel.grid(), channel.data().iter().map(|&c| !c).collect())?;
    if outside.is_empty() {
        return Ok(channel.data().to_vec());
    }
    let depth = distance_transform(&outside)?;
    let max = depth.iter().cloned().fold(0.0, f64::max);
    Ok(depth.iter().map(|&d| d > 0.0 && d >= 0.5 * max).collect())
}

fn values_where(patch: &Volume, sel: &[bool]) -> Vec<f64> {
    patch
        .data()
        .iter()
        .zip(sel)
        .filter(|(_, &c)| c)
        .map(|(&v, _)| v as f64)
        .collect()
}

/// `(center, spread)` of the values under the core of `channel`.
fn robust_stats(patch: &Volume, channel: &BinaryMask) -> Result<(f64, f64)> {
    let mut vals = values_where(patch, &channel_core(channel)?);
    let med = median(&mut vals);
    let mut dev: Vec<f64> = vals.iter().map(|v| (v - med).abs()).collect();
    Ok((med, MAD_TO_STD * median(&mut dev)))
}

/// Shell width outside the channel used to estimate the surroundings, in
/// voxels.
const SHELL_VOXELS: f64 = 3.0;

/// Median intensity of the shell just outside `channel`; `None` when the
/// channel leaves no room for one.
fn surround_median(patch: &Volume, channel: &BinaryMask) -> Result<Option<f64>> {
    let g = channel.grid();
    let width = SHELL_VOXELS * g.spacing.iter().cloned().fold(0.0, f64::max);
    let dist = distance_transform(channel)?;
    let shell: Vec<bool> = dist.iter().map(|&d| d > 0.0 && d <= width).collect();
    let mut vals = values_where(patch, &shell);
    Ok((!vals.is_empty()).then(|| median(&mut vals)))
}

fn neighbours(shape: [usize; 3], c: [usize; 3]) -> impl Iterator<Item = [usize; 3]> {
    (0..6).filter_map(move |n| {
        let k = n / 2;
        let mut d = c;
        if n % 2 == 0 {
            d[k] = d[k].checked_sub(1)?;
        } else {
            d[k] += 1;
            if d[k] >= shape[k] {
                return None;
            }
        }
        Some(d)
    })
}

/// One step of dilation (`grow = true`) or erosion with the 6-cross. Outside
/// the grid counts as foreground for erosion so closing does not eat the
/// patch border.
fn cross_step(m: &[bool], shape: [usize; 3], grow: bool) -> Vec<bool> {
    let g = crate::grid::Grid::unit(shape);
    crate::par::map_indices(m.len(), |i| {
        let c = g.coords(i);
        let mut nb = neighbours(shape, c).map(|d| m[g.index(d[0], d[1], d[2])]);
        if grow {
            m[i] || nb.any(|b| b)
        } else {
            m[i] && nb.all(|b| b)
        }
    })
}

impl BaselineSegmenter {
    fn grow(&self, patch: &Volume, channel: &BinaryMask, lo: f64, hi: f64) -> Vec<bool> {
        let g = *patch.grid();
        let d = patch.data();
        let inside = |i: usize| {
            let v = d[i] as f64;
            v >= lo && v <= hi
        };
        let mut region = vec![false; g.len()];
        let mut queue = VecDeque::new();
        for (i, &c) in channel.data().iter().enumerate() {
            if c && inside(i) {
                region[i] = true;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            for n in neighbours(g.shape, g.coords(i)) {
                let j = g.index(n[0], n[1], n[2]);
                if !region[j] && inside(j) {
                    region[j] = true;
                    queue.push_back(j);
                }
            }
        }
        region
    }
}

impl Segmenter for BaselineSegmenter {
    fn name(&self) -> &str {
        "baseline"
    }

    fn segment(&self, patch: &Volume, channel: &PromptChannel) -> Result<Segmentation> {
        check_inputs(patch, channel)?;
        let g = *patch.grid();
        if channel.is_empty() {
            return Ok(Segmentation {
                mask: BinaryMask::empty(g),
                flags: vec![SegFlag::Empty, SegFlag::LowConfidence],
            });
        }
        let (center, spread) = robust_stats(patch, channel)?;
        // a flat prompt region still gets a band wide enough for float noise
        let floor = 1e-6 * center.abs().max(1.0);
        let degenerate = spread <= floor;
        // at least half-way to the surroundings, so partial-volume edge
        // voxels are kept even when the interior is very uniform
        let to_edge = surround_median(patch, channel)?.map_or(0.0, |m| 0.5 * (center - m).abs());
        let half = (self.k * spread.max(floor)).max(to_edge);
        let mut region = self.grow(patch, channel, center - half, center + half);

        for _ in 0..self.closing_radius {
            region = cross_step(&region, g.shape, true);
        }
        for _ in 0..self.closing_radius {
            region = cross_step(&region, g.shape, false);
        }

        let grown = BinaryMask::new(g, region)?;
        let mut flags = Vec::new();
        let mask = if grown.is_empty() {
            grown
        } else {
            let cc = connected_components(&grown, Connectivity::Six)?;
            let mut overlap = vec![0usize; cc.num_instances() as usize + 1];
            for (&l, &c) in cc.data().iter().zip(channel.data()) {
                if c {
                    overlap[l as usize] += 1;
                }
            }
            overlap[0] = 0;
            // first maximum, so the lowest label wins ties
            let best = (1..overlap.len()).fold(0, |b, l| if overlap[l] > overlap[b] { l } else { b });
            if best == 0 {
                BinaryMask::empty(g)
            } else {
                cc.binary(best as u16)
            }
        };
        if mask.is_empty() {
            flags.push(SegFlag::Empty);
            flags.push(SegFlag::LowConfidence);
        } else {
            let touches = mask.data().iter().enumerate().any(|(i, &b)| {
                b && {
                    let c = g.coords(i);
                    (0..3).any(|k| c[k] == 0 || c[k] + 1 == g.shape[k])
                }
            });
            if touches {
                flags.push(SegFlag::ReachedRoiBound);
            }
            if touches || degenerate {
                flags.push(SegFlag::LowConfidence);
            }
        }
        Ok(Segmentation { mask, flags })
    }
}
