//! Lesion growth and shrinkage by the gradient of a blurred lesion indicator.
//!
//! For one lesion with indicator `S` the forward displacement is
//! `V(x) = -A(x) * grad(G_s * S)(x)`: with positive `A` voxels near the
//! boundary move outward, so the lesion grows. `A(x)` is a base amplitude
//! modulated by a smoothed random field. Warping uses the first-order inverse
//! `-V`, which is why progression is split into several small stages.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::gaussian::blur_f64;
use crate::field::ops::diff;
use crate::field::{compose, distance_transform, warp, warp_mask, DisplacementField};
use crate::grid::Grid;
use crate::rng::{self, tags};
use crate::volume::{BinaryMask, InstanceMask, Volume};

/// How the base amplitude is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeMode {
    /// Uniform on the shrink or the grow interval.
    #[default]
    Intervals,
    /// One of the four interval endpoints.
    DiscreteSet,
}

/// How the smoothed random field enters the amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulationMode {
    /// `A * (1 + G_r * r)`: the random field perturbs a unit-mean profile.
    #[default]
    UnitMean,
    /// `A * (G_r * r)` taken literally.
    Literal,
}

/// Whether one base amplitude serves every lesion of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeScope {
    #[default]
    PerImage,
    PerLesion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LesionTransformParams {
    /// Fixed blur for the indicator in mm; derived from lesion size when unset.
    pub sigma_s: Option<f64>,
    /// Range the size-derived sigma is mapped onto.
    pub sigma_s_range: [f64; 2],
    /// Equivalent-diameter range (mm) mapped onto `sigma_s_range`.
    pub diameter_range: [f64; 2],
    pub amplitude_shrink_range: [f64; 2],
    pub amplitude_grow_range: [f64; 2],
    pub grow_probability: f64,
    pub amplitude_mode: AmplitudeMode,
    pub amplitude_scope: AmplitudeScope,
    /// Forces the base amplitude (before division by the stage count).
    pub amplitude: Option<f64>,
    /// Range of the voxel-wise random field `r`.
    pub r_range: [f64; 2],
    /// Blur of `r` in mm.
    pub sigma_r: f64,
    pub modulation: ModulationMode,
    /// Number of stages; drawn from {1, 2, 3} when unset.
    pub stages: Option<u32>,
}

impl Default for LesionTransformParams {
    fn default() -> Self {
        LesionTransformParams {
            sigma_s: None,
            sigma_s_range: [4.0, 5.5],
            diameter_range: [5.0, 60.0],
            amplitude_shrink_range: [-22.0, -18.0],
            amplitude_grow_range: [15.0, 25.0],
            grow_probability: 0.5,
            amplitude_mode: AmplitudeMode::Intervals,
            amplitude_scope: AmplitudeScope::PerImage,
            amplitude: None,
            r_range: [-3.5, 3.5],
            sigma_r: 3.0,
            modulation: ModulationMode::UnitMean,
            stages: None,
        }
    }
}

impl LesionTransformParams {
    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0] <= r[1] && r.iter().all(|v| v.is_finite());
        if !(ordered(self.sigma_s_range)
            && ordered(self.diameter_range)
            && ordered(self.amplitude_shrink_range)
            && ordered(self.amplitude_grow_range)
            && ordered(self.r_range))
        {
            return Err(Error::InvalidInput("lesion parameter ranges must be ordered".into()));
        }
        if !(0.0..=1.0).contains(&self.grow_probability) {
            return Err(Error::InvalidInput("grow_probability must lie in [0, 1]".into()));
        }
        if self.stages == Some(0) {
            return Err(Error::InvalidInput("stages must be >= 1".into()));
        }
        if self.sigma_s.is_some_and(|s| !(s > 0.0)) || !(self.sigma_r >= 0.0) {
            return Err(Error::InvalidInput("sigmas must be positive".into()));
        }
        Ok(())
    }

    /// Grow-only variant of these parameters.
    pub fn grow(mut self) -> Self {
        self.grow_probability = 1.0;
        self
    }

    /// Shrink-only variant of these parameters.
    pub fn shrink(mut self) -> Self {
        self.grow_probability = 0.0;
        self
    }

    /// Indicator blur for a lesion of `volume_mm3`: the equivalent sphere
    /// diameter, clamped to `diameter_range`, mapped linearly onto
    /// `sigma_s_range`.
    pub fn sigma_for_volume(&self, volume_mm3: f64) -> f64 {
        if let Some(s) = self.sigma_s {
            return s;
        }
        let d = (6.0 * volume_mm3 / std::f64::consts::PI).cbrt();
        let [d0, d1] = self.diameter_range;
        let [s0, s1] = self.sigma_s_range;
        if d1 <= d0 {
            return s0;
        }
        let t = ((d - d0) / (d1 - d0)).clamp(0.0, 1.0);
        s0 + t * (s1 - s0)
    }

    fn sample_amplitude(&self, r: &mut rng::Rng) -> f64 {
        if let Some(a) = self.amplitude {
            return a;
        }
        let grow = r.gen_bool(self.grow_probability);
        let range = if grow {
            self.amplitude_grow_range
        } else {
            self.amplitude_shrink_range
        };
        match self.amplitude_mode {
            AmplitudeMode::Intervals => {
                if range[0] == range[1] {
                    range[0]
                } else {
                    r.gen_range(range[0]..range[1])
                }
            }
            AmplitudeMode::DiscreteSet => {
                if r.gen_bool(0.5) {
                    range[0]
                } else {
                    range[1]
                }
            }
        }
    }
}

/// Smoothed voxel-wise random field `G_r * r`.
pub fn modulation_field(grid: &Grid, p: &LesionTransformParams, r: &mut rng::Rng) -> Vec<f64> {
    let [lo, hi] = p.r_range;
    let raw: Vec<f64> = (0..grid.len())
        .map(|_| if lo == hi { lo } else { r.gen_range(lo..hi) })
        .collect();
    let sigma: [f64; 3] = std::array::from_fn(|k| p.sigma_r / grid.spacing[k]);
    blur_f64(grid.shape, &raw, sigma, 4.0)
}

/// Per-voxel amplitude `A(x)` for base amplitude `a`.
pub fn amplitude_field(a: f64, modulation: &[f64], mode: ModulationMode) -> Vec<f64> {
    match mode {
        ModulationMode::UnitMean => modulation.iter().map(|m| a * (1.0 + m)).collect(),
        ModulationMode::Literal => modulation.iter().map(|m| a * m).collect(),
    }
}

/// Field support in units of the indicator blur, measured from the lesion.
pub const SUPPORT_SIGMAS: f64 = 5.0;

/// Forward displacement `-A(x) grad(G_sigma * S)` for one instance, zero
/// beyond [`SUPPORT_SIGMAS`] blur widths from the lesion.
///
/// The blur is computed on the lesion's bounding box padded by the kernel
/// reach, which gives the same result as a full-grid blur because the
/// indicator is zero outside it.
pub fn lesion_field(mask: &InstanceMask, label: u16, sigma_mm: f64, amp: &[f64]) -> Result<DisplacementField> {
    let g = *mask.grid();
    if amp.len() != g.len() {
        return Err(Error::InvalidInput("amplitude field does not match the mask grid".into()));
    }
    if !mask.contains_label(label) {
        return Err(Error::MissingLabel(label));
    }
    let (lo, hi) = crate::prompt::tight_bounds(mask, label)?;
    let sig_vox: [f64; 3] = std::array::from_fn(|k| sigma_mm / g.spacing[k]);
    let pad: [usize; 3] = std::array::from_fn(|k| (4.0 * sig_vox[k]).ceil() as usize + 2);
    let b0: [usize; 3] = std::array::from_fn(|k| lo[k].saturating_sub(pad[k]));
    let b1: [usize; 3] = std::array::from_fn(|k| (hi[k] + pad[k]).min(g.shape[k] - 1));
    let sub_shape: [usize; 3] = std::array::from_fn(|k| b1[k] - b0[k] + 1);
    let sub = Grid::new(sub_shape, g.spacing, g.voxel_center(b0).0)?;
    let at = |c: [usize; 3]| g.index(b0[0] + c[0], b0[1] + c[1], b0[2] + c[2]);

    let ind: Vec<f64> = (0..sub.len())
        .map(|i| if mask.data()[at(sub.coords(i))] == label { 1.0 } else { 0.0 })
        .collect();
    let blurred = blur_f64(sub_shape, &ind, sig_vox, 4.0);
    let grad: [Vec<f64>; 3] = std::array::from_fn(|k| diff(&sub, &blurred, k));
    // the separable kernel has a cubic footprint; cut it to a ball
    let support = BinaryMask::new(sub, ind.iter().map(|&v| v > 0.0).collect())?;
    let dist = distance_transform(&support)?;
    let cutoff = SUPPORT_SIGMAS * sigma_mm;

    let mut data = vec![[0.0; 3]; g.len()];
    for i in 0..sub.len() {
        if dist[i] > cutoff {
            continue;
        }
        let gi = at(sub.coords(i));
        let a = amp[gi];
        data[gi] = std::array::from_fn(|k| {
            let v = -a * grad[k][i];
            // avoid signed zeros so an all-zero field compares bit-equal
            if v == 0.0 {
                0.0
            } else {
                v
            }
        });
    }
    DisplacementField::new(g, data)
}

/// Sample a lesion field with freshly drawn amplitude and modulation.
pub fn lesion_deformation_field(
    mask: &InstanceMask,
    label: u16,
    p: &LesionTransformParams,
    r: &mut rng::Rng,
) -> Result<DisplacementField> {
    p.validate()?;
    let g = *mask.grid();
    let a = p.sample_amplitude(r);
    let m = modulation_field(&g, p, r);
    let vox = g.spacing.iter().product::<f64>();
    let sigma = p.sigma_for_volume(mask.count(label) as f64 * vox);
    lesion_field(mask, label, sigma, &amplitude_field(a, &m, p.modulation))
}

/// What was drawn for one lesion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionDraw {
    pub label: u16,
    pub amplitude: f64,
    pub sigma_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionRecord {
    pub stages: u32,
    pub lesions: Vec<LesionDraw>,
}

#[derive(Debug, Clone)]
pub struct Progression {
    pub image: Volume,
    pub mask: InstanceMask,
    /// Forward field, original frame to progressed frame.
    pub field: DisplacementField,
    pub record: ProgressionRecord,
}

fn is_zero(u: &DisplacementField) -> bool {
    u.data().iter().all(|v| v.iter().all(|&c| c == 0.0))
}

/// Multi-stage lesion progression. Each stage applies `A / stages` for every
/// lesion, with fields recomputed from the current mask.
pub fn apply_lesion_progression(
    img: &Volume,
    mask: &InstanceMask,
    p: &LesionTransformParams,
    seed: u64,
) -> Result<Progression> {
    p.validate()?;
    img.grid().ensure_matches(mask.grid(), "image and mask")?;
    let g = *mask.grid();
    let labels = mask.labels();
    if labels.is_empty() {
        return Err(Error::EmptyMask);
    }
    let stages = match p.stages {
        Some(s) => s,
        None => rng::stream(seed, &[tags::LESION_STAGES]).gen_range(1..=3),
    };
    let image_amp = p.sample_amplitude(&mut rng::stream(seed, &[tags::LESION_AMPLITUDE]));
    let modulation = modulation_field(&g, p, &mut rng::stream(seed, &[tags::LESION_MODULATION]));
    let vox = g.spacing.iter().product::<f64>();
    let draws: Vec<LesionDraw> = labels
        .iter()
        .map(|&l| LesionDraw {
            label: l,
            amplitude: match p.amplitude_scope {
                AmplitudeScope::PerImage => image_amp,
                AmplitudeScope::PerLesion => {
                    p.sample_amplitude(&mut rng::stream(seed, &[tags::LESION_AMPLITUDE, l as u64]))
                }
            },
            sigma_s: p.sigma_for_volume(mask.count(l) as f64 * vox),
        })
        .collect();

    // stage pull-backs are chained into one field so the originals are
    // resampled once; per-stage nearest resampling would round sub-voxel
    // steps away
    let mut cur_mask = mask.clone();
    let mut pull = DisplacementField::zeros(g);
    let mut total = DisplacementField::zeros(g);
    for _ in 0..stages {
        let mut stage = vec![[0.0; 3]; g.len()];
        for d in &draws {
            if !cur_mask.contains_label(d.label) {
                continue;
            }
            let amp = amplitude_field(d.amplitude / stages as f64, &modulation, p.modulation);
            let v = lesion_field(&cur_mask, d.label, d.sigma_s, &amp)?;
            for (s, x) in stage.iter_mut().zip(v.data()) {
                for k in 0..3 {
                    s[k] += x[k];
                }
            }
        }
        let v = DisplacementField::new(g, stage)?;
        if is_zero(&v) {
            continue;
        }
        pull = compose(&pull, &v.negated())?;
        cur_mask = warp_mask(mask, &pull)?;
        total = compose(&v, &total)?;
    }
    let image = if is_zero(&pull) { img.clone() } else { warp(img, &pull)? };
    Ok(Progression {
        image,
        mask: cur_mask,
        field: total,
        record: ProgressionRecord {
            stages,
            lesions: draws,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(n: usize, r: f64) -> InstanceMask {
        let g = Grid::unit([n; 3]);
        let c = (n as f64 - 1.0) / 2.0;
        let d = (0..g.len())
            .map(|i| {
                let p = g.coords(i);
                let d2: f64 = (0..3).map(|k| (p[k] as f64 - c).powi(2)).sum();
                u16::from(d2 <= r * r)
            })
            .collect();
        InstanceMask::new(g, d, 1).unwrap()
    }

    #[test]
    fn sigma_map_endpoints() {
        let p = LesionTransformParams::default();
        let vol = |d: f64| std::f64::consts::PI * d.powi(3) / 6.0;
        assert!((p.sigma_for_volume(vol(5.0)) - 4.0).abs() < 1e-9);
        assert!((p.sigma_for_volume(vol(60.0)) - 5.5).abs() < 1e-9);
        assert!((p.sigma_for_volume(vol(1.0)) - 4.0).abs() < 1e-9);
        assert!((p.sigma_for_volume(vol(32.5)) - 4.75).abs() < 1e-9);
    }

    #[test]
    fn zero_amplitude_gives_zero_field() {
        let m = sphere(20, 4.0);
        let f = lesion_field(&m, 1, 4.0, &vec![0.0; m.grid().len()]).unwrap();
        assert!(is_zero(&f));
    }

    #[test]
    fn positive_amplitude_pushes_outward() {
        let m = sphere(32, 8.0);
        let g = *m.grid();
        let f = lesion_field(&m, 1, 4.0, &vec![20.0; g.len()]).unwrap();
        let c = 15.5;
        let mut checked = 0;
        for i in 0..g.len() {
            let p = g.coords(i);
            let r: [f64; 3] = std::array::from_fn(|k| p[k] as f64 - c);
            let rn = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
            if (rn - 8.0).abs() < 0.5 {
                let dot: f64 = (0..3).map(|k| f.data()[i][k] * r[k] / rn).sum();
                assert!(dot > 0.0);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn field_is_local() {
        let m = sphere(48, 4.0);
        let g = *m.grid();
        let f = lesion_field(&m, 1, 4.0, &vec![20.0; g.len()]).unwrap();
        let c = 23.5;
        for i in 0..g.len() {
            let p = g.coords(i);
            let d2: f64 = (0..3).map(|k| (p[k] as f64 - c).powi(2)).sum();
            if d2.sqrt() > 4.0 + 4.0 * 4.0 + 4.0 * 3.0 {
                assert_eq!(f.data()[i], [0.0; 3]);
            }
        }
    }

    #[test]
    fn subbox_matches_full_grid_blur() {
        let m = sphere(30, 3.0);
        let g = *m.grid();
        let amp = vec![1.0; g.len()];
        let f = lesion_field(&m, 1, 2.0, &amp).unwrap();
        let ind: Vec<f64> = m.data().iter().map(|&l| l as f64).collect();
        let b = blur_f64(g.shape, &ind, [2.0; 3], 4.0);
        let dist = distance_transform(&m.binary(1)).unwrap();
        for k in 0..3 {
            let d = diff(&g, &b, k);
            for i in 0..g.len() {
                if dist[i] <= SUPPORT_SIGMAS * 2.0 {
                    assert!((f.data()[i][k] + d[i]).abs() < 1e-12);
                } else {
                    assert_eq!(f.data()[i][k], 0.0);
                    assert!(d[i].abs() < 1e-4);
                }
            }
        }
    }

    #[test]
    fn growth_and_shrinkage() {
        let m = sphere(40, 8.0);
        let img = Volume::from_fn(*m.grid(), |[x, _, _]| x as f32).unwrap();
        let base = LesionTransformParams {
            stages: Some(3),
            ..Default::default()
        };
        let before = m.count(1);
        let g = apply_lesion_progression(&img, &m, &base.clone().grow(), 3).unwrap();
        assert!(g.mask.count(1) as f64 >= 1.05 * before as f64);
        let s = apply_lesion_progression(&img, &m, &base.shrink(), 3).unwrap();
        assert!(s.mask.count(1) < before);
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let m = sphere(24, 5.0);
        let img = Volume::from_fn(*m.grid(), |[x, y, z]| (x * 3 + y + z) as f32).unwrap();
        let p = LesionTransformParams {
            amplitude: Some(0.0),
            ..Default::default()
        };
        let out = apply_lesion_progression(&img, &m, &p, 9).unwrap();
        assert_eq!(out.image, img);
        assert_eq!(out.mask, m);
        assert!(is_zero(&out.field));
    }
}
