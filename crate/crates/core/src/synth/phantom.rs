//! Seeded CT-like test volumes with ellipsoidal lesions.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::gaussian::blur_f64;
use crate::grid::Grid;
use crate::rng::{self, tags};
use crate::volume::{InstanceMask, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub shape: [usize; 3],
    pub spacing: [f64; 3],
    pub lesions: usize,
    /// Lesion radius range in mm.
    pub radius_mm: [f64; 2],
    /// Lesion intensity above the surrounding tissue.
    pub contrast: f64,
    /// Standard deviation of the additive voxel noise.
    pub noise: f64,
    /// Amplitude of the smooth tissue texture.
    pub texture: f64,
    pub background: f64,
    pub tissue: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            shape: [64; 3],
            spacing: [1.0; 3],
            lesions: 2,
            radius_mm: [5.0, 8.0],
            contrast: 120.0,
            noise: 8.0,
            texture: 15.0,
            background: -1000.0,
            tissue: 40.0,
        }
    }
}

/// Lesion geometry actually placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomLesion {
    pub label: u16,
    pub center_mm: [f64; 3],
    pub semi_axes_mm: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub image: Volume,
    pub mask: InstanceMask,
    pub lesions: Vec<PhantomLesion>,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.shape.iter().any(|&n| n < 8) {
            return bad(format!("phantom shape {:?} must be at least 8 per axis", self.shape));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad(format!("spacing {:?} must be positive", self.spacing));
        }
        let [lo, hi] = self.radius_mm;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("radius range {:?} must satisfy 0 < lo <= hi", self.radius_mm));
        }
        // lesions must fit well inside the body ellipsoid
        let body_half = (0..3)
            .map(|k| 0.4 * self.shape[k] as f64 * self.spacing[k])
            .fold(f64::INFINITY, f64::min);
        if self.lesions > 0 && 1.2 * hi >= 0.8 * body_half {
            return bad(format!(
                "lesion radius {hi} mm does not fit in a {:?} volume",
                self.shape
            ));
        }
        if self.lesions > u16::MAX as usize {
            return bad("too many lesions".into());
        }
        if !(self.noise >= 0.0 && self.texture >= 0.0 && self.contrast.is_finite()) {
            return bad("noise and texture must be non-negative".into());
        }
        Ok(())
    }
}

/// Body ellipsoid filled with smooth texture, air outside, bright
/// ellipsoidal lesions, additive Gaussian noise.
pub fn phantom(spec: &PhantomSpec, seed: u64) -> Result<Phantom> {
    spec.validate()?;
    let grid = Grid::new(spec.shape, spec.spacing, [0.0; 3])?;
    let n = grid.len();
    let extent: [f64; 3] = std::array::from_fn(|k| (spec.shape[k] - 1) as f64 * spec.spacing[k]);
    let center: [f64; 3] = std::array::from_fn(|k| 0.5 * extent[k]);
    let body: [f64; 3] = std::array::from_fn(|k| 0.4 * spec.shape[k] as f64 * spec.spacing[k]);

    let mut r = rng::stream(seed, &[tags::PHANTOM, 0]);
    let mut lesions: Vec<PhantomLesion> = Vec::new();
    for l in 0..spec.lesions {
        let mut placed = None;
        for _ in 0..1000 {
            let rad = r.gen_range(spec.radius_mm[0]..=spec.radius_mm[1]);
            let axes: [f64; 3] = std::array::from_fn(|_| rad * r.gen_range(0.85..=1.15));
            let reach = axes.iter().cloned().fold(0.0, f64::max);
            // center inside the body, at least `reach + 2` from its surface
            let span: [f64; 3] = std::array::from_fn(|k| (body[k] - reach - 2.0).max(1e-9));
            let c: [f64; 3] = std::array::from_fn(|k| center[k] + r.gen_range(-1.0..=1.0) * span[k]);
            let inside: f64 = (0..3).map(|k| ((c[k] - center[k]) / span[k]).powi(2)).sum();
            let clear = lesions.iter().all(|o| {
                let d: f64 = (0..3).map(|k| (o.center_mm[k] - c[k]).powi(2)).sum::<f64>().sqrt();
                let ro = o.semi_axes_mm.iter().cloned().fold(0.0, f64::max);
                d > reach + ro + 4.0
            });
            if inside <= 1.0 && clear {
                placed = Some(PhantomLesion {
                    label: (l + 1) as u16,
                    center_mm: c,
                    semi_axes_mm: axes,
                });
                break;
            }
        }
        match placed {
            Some(p) => lesions.push(p),
            None => {
                return Err(Error::InvalidInput(format!(
                    "could not place {} non-overlapping lesions",
                    spec.lesions
                )))
            }
        }
    }

    let mut noise_rng = rng::stream(seed, &[tags::PHANTOM, 1]);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let raw: Vec<f64> = (0..n).map(|_| unit.sample(&mut noise_rng)).collect();
    let sig: [f64; 3] = std::array::from_fn(|k| 3.0 / spec.spacing[k]);
    let mut tex = blur_f64(grid.shape, &raw, sig, 4.0);
    let tex_std = (tex.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt().max(1e-12);
    tex.iter_mut().for_each(|v| *v /= tex_std);
    let vox_noise: Vec<f64> = (0..n).map(|_| unit.sample(&mut noise_rng)).collect();

    let mut labels = vec![0u16; n];
    let mut img = vec![0f32; n];
    for i in 0..n {
        let p = grid.voxel_center(grid.coords(i));
        let in_body: f64 = (0..3).map(|k| ((p[k] - center[k]) / body[k]).powi(2)).sum();
        let mut v = if in_body <= 1.0 {
            spec.tissue + spec.texture * tex[i]
        } else {
            spec.background
        };
        for les in &lesions {
            let q: f64 = (0..3)
                .map(|k| ((p[k] - les.center_mm[k]) / les.semi_axes_mm[k]).powi(2))
                .sum();
            if q <= 1.0 {
                labels[i] = les.label;
                v = spec.tissue + spec.contrast;
            }
        }
        img[i] = (v + spec.noise * vox_noise[i]) as f32;
    }
    Ok(Phantom {
        image: Volume::new(grid, img)?,
        mask: InstanceMask::new(grid, labels, spec.lesions as u16)?,
        lesions,
    })
}
