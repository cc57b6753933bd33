//! Image-level spatial and intensity augmentation.
//!
//! Elastic, rotation, scaling and translation are merged into one pull-back
//! field and applied once. Intensity steps run in a fixed order (noise, blur,
//! brightness, contrast) on the image only.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::gaussian::blur_f64;
use crate::field::{warp, warp_mask, DisplacementField};
use crate::grid::{Grid, Point3};
use crate::rng::{self, tags};
use crate::volume::{InstanceMask, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElasticParams {
    pub prob: f64,
    /// Smoothness of the random field as a fraction of the image extent.
    pub scale: [f64; 2],
    /// Largest displacement as a fraction of that smoothness length.
    pub magnitude: [f64; 2],
}

impl Default for ElasticParams {
    fn default() -> Self {
        ElasticParams {
            prob: 1.0,
            scale: [0.05, 0.05],
            magnitude: [0.05, 0.05],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotationParams {
    pub prob: f64,
    /// Per-axis angles are drawn from `[-degrees, degrees]`.
    pub degrees: f64,
}

impl Default for RotationParams {
    fn default() -> Self {
        RotationParams { prob: 1.0, degrees: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingParams {
    pub prob: f64,
    pub range: [f64; 2],
    /// One factor for all axes.
    pub synced: bool,
}

impl Default for ScalingParams {
    fn default() -> Self {
        ScalingParams {
            prob: 0.5,
            range: [0.95, 1.05],
            synced: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslationParams {
    pub prob: f64,
    /// Per-axis shift drawn from `[-voxels, voxels]`.
    pub voxels: f64,
}

impl Default for TranslationParams {
    fn default() -> Self {
        TranslationParams { prob: 1.0, voxels: 5.0 }
    }
}

/// Bernoulli gate plus a value range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gated {
    pub prob: f64,
    pub range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastParams {
    pub prob: f64,
    pub range: [f64; 2],
    /// Clip back to the pre-adjustment intensity range.
    pub preserve_range: bool,
}

impl Default for ContrastParams {
    fn default() -> Self {
        ContrastParams {
            prob: 0.15,
            range: [0.75, 1.25],
            preserve_range: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageAugParams {
    pub elastic: ElasticParams,
    pub rotation: RotationParams,
    pub scaling: ScalingParams,
    pub translation: TranslationParams,
    /// Additive Gaussian noise; the variance is relative to the foreground
    /// intensity variance.
    pub noise: Gated,
    /// Gaussian blur, sigma in voxels.
    pub blur: Gated,
    pub brightness: Gated,
    pub contrast: ContrastParams,
}

impl Default for ImageAugParams {
    fn default() -> Self {
        ImageAugParams {
            elastic: ElasticParams::default(),
            rotation: RotationParams::default(),
            scaling: ScalingParams::default(),
            translation: TranslationParams::default(),
            noise: Gated {
                prob: 1.0,
                range: [0.0, 0.05],
            },
            blur: Gated {
                prob: 0.1,
                range: [0.1, 0.2],
            },
            brightness: Gated {
                prob: 0.15,
                range: [0.75, 1.25],
            },
            contrast: ContrastParams::default(),
        }
    }
}

impl ImageAugParams {
    /// Every augmentation disabled.
    pub fn off() -> Self {
        let mut p = ImageAugParams::default();
        p.elastic.prob = 0.0;
        p.rotation.prob = 0.0;
        p.scaling.prob = 0.0;
        p.translation.prob = 0.0;
        p.noise.prob = 0.0;
        p.blur.prob = 0.0;
        p.brightness.prob = 0.0;
        p.contrast.prob = 0.0;
        p
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            self.elastic.prob,
            self.rotation.prob,
            self.scaling.prob,
            self.translation.prob,
            self.noise.prob,
            self.blur.prob,
            self.brightness.prob,
            self.contrast.prob,
        ];
        let ranges = [
            self.elastic.scale,
            self.elastic.magnitude,
            self.scaling.range,
            self.noise.range,
            self.blur.range,
            self.brightness.range,
            self.contrast.range,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(crate::Error::InvalidInput("augmentation probabilities must lie in [0, 1]".into()));
        }
        if ranges.iter().any(|r| !(r[0] <= r[1]) || r[0] < 0.0) {
            return Err(crate::Error::InvalidInput("augmentation ranges must be ordered and non-negative".into()));
        }
        if !(self.rotation.degrees >= 0.0 && self.translation.voxels >= 0.0) {
            return Err(crate::Error::InvalidInput("rotation and translation bounds must be >= 0".into()));
        }
        Ok(())
    }
}

/// What the augmentation actually drew.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugRecord {
    pub rotation_deg: Option<[f64; 3]>,
    pub scaling: Option<[f64; 3]>,
    pub translation_mm: Option<[f64; 3]>,
    /// Smoothness length (mm, per axis) and largest displacement (mm).
    pub elastic: Option<([f64; 3], f64)>,
    pub noise_std: Option<f64>,
    pub blur_sigma_vox: Option<[f64; 3]>,
    pub brightness: Option<f64>,
    pub contrast: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Augmented {
    pub image: Volume,
    pub mask: InstanceMask,
    /// Forward field from the input frame to the augmented frame.
    pub field: DisplacementField,
    pub record: AugRecord,
}

fn draw(r: &mut rng::Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        r.gen_range(range[0]..range[1])
    }
}

type Mat3 = [[f64; 3]; 3];

fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

fn apply(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| (0..3).map(|k| m[i][k] * v[k]).sum())
}

/// `Rz * Ry * Rx` for angles in degrees.
fn rotation(deg: [f64; 3]) -> Mat3 {
    let [ax, ay, az] = deg.map(f64::to_radians);
    let rx = [[1.0, 0.0, 0.0], [0.0, ax.cos(), -ax.sin()], [0.0, ax.sin(), ax.cos()]];
    let ry = [[ay.cos(), 0.0, ay.sin()], [0.0, 1.0, 0.0], [-ay.sin(), 0.0, ay.cos()]];
    let rz = [[az.cos(), -az.sin(), 0.0], [az.sin(), az.cos(), 0.0], [0.0, 0.0, 1.0]];
    matmul(&rz, &matmul(&ry, &rx))
}

struct Spatial {
    rot: Option<[f64; 3]>,
    scale: Option<[f64; 3]>,
    shift: Option<[f64; 3]>,
    elastic: Option<(DisplacementField, [f64; 3], f64)>,
}

fn sample_spatial(grid: &Grid, p: &ImageAugParams, seed: u64) -> Spatial {
    let mut r = rng::stream(seed, &[tags::AUG_SPATIAL]);
    let rot = r.gen_bool(p.rotation.prob).then(|| {
        let d = p.rotation.degrees;
        std::array::from_fn(|_| draw(&mut r, [-d, d]))
    });
    let scale = r.gen_bool(p.scaling.prob).then(|| {
        if p.scaling.synced {
            [draw(&mut r, p.scaling.range); 3]
        } else {
            std::array::from_fn(|_| draw(&mut r, p.scaling.range))
        }
    });
    let shift = r.gen_bool(p.translation.prob).then(|| {
        let v = p.translation.voxels;
        std::array::from_fn(|k| draw(&mut r, [-v, v]) * grid.spacing[k])
    });

    let mut e = rng::stream(seed, &[tags::AUG_ELASTIC]);
    let elastic = if e.gen_bool(p.elastic.prob) {
        let scale = draw(&mut e, p.elastic.scale);
        let magnitude = draw(&mut e, p.elastic.magnitude);
        let sigma_mm: [f64; 3] = std::array::from_fn(|k| scale * grid.shape[k] as f64 * grid.spacing[k]);
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        let comps: [Vec<f64>; 3] = std::array::from_fn(|_| {
            let raw: Vec<f64> = (0..grid.len()).map(|_| unit.sample(&mut e)).collect();
            let sv: [f64; 3] = std::array::from_fn(|k| sigma_mm[k] / grid.spacing[k]);
            blur_f64(grid.shape, &raw, sv, 4.0)
        });
        let mut f = DisplacementField::from_components(*grid, [&comps[0], &comps[1], &comps[2]])
            .expect("finite noise");
        let peak = f.max_norm();
        let target = magnitude * sigma_mm.iter().sum::<f64>() / 3.0;
        if peak > 0.0 {
            f = f.scaled(target / peak);
        }
        Some((f, sigma_mm, target))
    } else {
        None
    };
    Spatial {
        rot,
        scale,
        shift,
        elastic,
    }
}

impl Spatial {
    fn active(&self) -> bool {
        self.rot.is_some() || self.scale.is_some() || self.shift.is_some() || self.elastic.is_some()
    }

    /// Pull-back field `y -> source(y) - y` and forward field `x -> phi(x) - x`.
    fn fields(&self, grid: &Grid) -> Result<(DisplacementField, DisplacementField)> {
        let b = grid.center_bounds();
        let c = b.center();
        let r = self.rot.map(rotation).unwrap_or([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let s = self.scale.unwrap_or([1.0; 3]);
        let t = self.shift.unwrap_or([0.0; 3]);
        // forward: y = c + S R (x - c) + t
        let sr: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| s[i] * r[i][j]));
        // inverse: x = c + R^T S^-1 (y - c - t)
        let inv: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| r[j][i] / s[j]));
        let affine_fwd = |x: Point3| -> [f64; 3] {
            let d = apply(&sr, std::array::from_fn(|k| x[k] - c[k]));
            std::array::from_fn(|k| c[k] + d[k] + t[k] - x[k])
        };
        let pull = DisplacementField::from_fn(*grid, |y| {
            let d = apply(&inv, std::array::from_fn(|k| y[k] - c[k] - t[k]));
            let mut v: [f64; 3] = std::array::from_fn(|k| c[k] + d[k] - y[k]);
            if let Some((e, _, _)) = &self.elastic {
                let ev = e.sample_mm_clamped(y);
                for k in 0..3 {
                    v[k] += ev[k];
                }
            }
            v
        })?;
        let fwd = DisplacementField::from_fn(*grid, |x| {
            let mut v = affine_fwd(x);
            if let Some((e, _, _)) = &self.elastic {
                let ev = e.sample_mm_clamped(x.offset(v));
                for k in 0..3 {
                    v[k] -= ev[k];
                }
            }
            v
        })?;
        Ok((pull, fwd))
    }
}

/// `(mean, std)` of the intensities under `mask`'s foreground, or of the
/// whole image when the mask is empty or absent.
pub fn foreground_stats(img: &Volume, mask: Option<&InstanceMask>) -> (f64, f64) {
    let vals: Vec<f64> = match mask {
        Some(m) => img
            .data()
            .iter()
            .zip(m.data())
            .filter(|(_, &l)| l > 0)
            .map(|(&v, _)| v as f64)
            .collect(),
        None => Vec::new(),
    };
    if vals.is_empty() {
        return img.mean_std();
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    (mean, (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// Intensity augmentations applied to a volume in place of the original.
///
/// `reference` is the `(mean, std)` of a foreground-normalized image (see
/// [`foreground_stats`]): noise variance is relative to its variance and
/// contrast scales about its mean.
pub fn intensity_augment(
    img: &Volume,
    reference: (f64, f64),
    p: &ImageAugParams,
    seed: u64,
    record: &mut AugRecord,
) -> Result<Volume> {
    let mut r = rng::stream(seed, &[tags::AUG_INTENSITY]);
    let g = *img.grid();
    let mut data = img.to_f64();

    if r.gen_bool(p.noise.prob) {
        let var = draw(&mut r, p.noise.range);
        let sd = var.sqrt() * reference.1;
        if sd > 0.0 {
            let mut nr = rng::stream(seed, &[tags::AUG_NOISE]);
            let n = Normal::new(0.0, sd).expect("positive std");
            data.iter_mut().for_each(|v| *v += n.sample(&mut nr));
        }
        record.noise_std = Some(sd);
    }
    if r.gen_bool(p.blur.prob) {
        let s: [f64; 3] = std::array::from_fn(|_| draw(&mut r, p.blur.range));
        data = blur_f64(g.shape, &data, s, 4.0);
        record.blur_sigma_vox = Some(s);
    }
    if r.gen_bool(p.brightness.prob) {
        let m = draw(&mut r, p.brightness.range);
        data.iter_mut().for_each(|v| *v *= m);
        record.brightness = Some(m);
    }
    if r.gen_bool(p.contrast.prob) {
        let f = draw(&mut r, p.contrast.range);
        let mean = reference.0;
        let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        data.iter_mut().for_each(|v| {
            *v = (*v - mean) * f + mean;
            if p.contrast.preserve_range {
                *v = v.clamp(lo, hi);
            }
        });
        record.contrast = Some(f);
    }
    if record.noise_std.is_none()
        && record.blur_sigma_vox.is_none()
        && record.brightness.is_none()
        && record.contrast.is_none()
    {
        return Ok(img.clone());
    }
    Volume::from_f64(g, &data)
}

/// Spatial then intensity augmentation of an image/mask pair.
pub fn image_level_augment(img: &Volume, mask: &InstanceMask, p: &ImageAugParams, seed: u64) -> Result<Augmented> {
    p.validate()?;
    img.grid().ensure_matches(mask.grid(), "image and mask")?;
    let g = *img.grid();
    let sp = sample_spatial(&g, p, seed);
    let mut record = AugRecord {
        rotation_deg: sp.rot,
        scaling: sp.scale,
        translation_mm: sp.shift,
        elastic: sp.elastic.as_ref().map(|(_, s, m)| (*s, *m)),
        ..Default::default()
    };
    let (image, mask, field) = if sp.active() {
        let (pull, fwd) = sp.fields(&g)?;
        (warp(img, &pull)?, warp_mask(mask, &pull)?, fwd)
    } else {
        (img.clone(), mask.clone(), DisplacementField::zeros(g))
    };
    let reference = foreground_stats(&image, Some(&mask));
    let image = intensity_augment(&image, reference, p, seed, &mut record)?;
    Ok(Augmented {
        image,
        mask,
        field,
        record,
    })
}
