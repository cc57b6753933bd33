//! Synthetic follow-up scans from a single image/mask pair.

pub mod augment;
pub mod lesion;
pub mod phantom;

use serde::{Deserialize, Serialize};

pub use augment::{foreground_stats, image_level_augment, intensity_augment, AugRecord, Augmented, ImageAugParams};
pub use lesion::{
    apply_lesion_progression, lesion_deformation_field, lesion_field, AmplitudeMode, AmplitudeScope,
    LesionTransformParams, ModulationMode, Progression, ProgressionRecord,
};
pub use phantom::{phantom, Phantom, PhantomLesion, PhantomSpec};

use crate::error::Result;
use crate::field::{compose, DisplacementField};
use crate::volume::{InstanceMask, Volume};

/// Everything needed to reproduce a synthetic follow-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub seed: u64,
    pub lesion_params: LesionTransformParams,
    pub aug_params: ImageAugParams,
    pub lesion: ProgressionRecord,
    pub augment: AugRecord,
}

#[derive(Debug, Clone)]
pub struct SyntheticTimepoint {
    pub image: Volume,
    pub mask: InstanceMask,
    /// Forward map from the input frame to the synthetic follow-up.
    pub total_field: DisplacementField,
    pub seed: u64,
    pub params_used: SynthRecord,
}

/// Lesion progression followed by image-level augmentation.
pub fn synthesize_followup(
    img: &Volume,
    mask: &InstanceMask,
    lesion_p: &LesionTransformParams,
    aug_p: &ImageAugParams,
    seed: u64,
) -> Result<SyntheticTimepoint> {
    let prog = apply_lesion_progression(img, mask, lesion_p, seed)?;
    let aug = image_level_augment(&prog.image, &prog.mask, aug_p, seed)?;
    let total = compose(&aug.field, &prog.field)?;
    Ok(SyntheticTimepoint {
        image: aug.image,
        mask: aug.mask,
        total_field: total,
        seed,
        params_used: SynthRecord {
            seed,
            lesion_params: lesion_p.clone(),
            aug_params: aug_p.clone(),
            lesion: prog.record,
            augment: aug.record,
        },
    })
}
