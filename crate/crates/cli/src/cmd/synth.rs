use std::path::PathBuf;

use lesiontrack::nifti::{load_mask, load_volume, save_field, save_mask, save_volume};
use lesiontrack::synth::{synthesize_followup, ImageAugParams};

use super::{ensure_dir, require_file, write_json};
use crate::fail::{code, fail};
use crate::Context;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Direction {
    /// Draw growth or shrinkage per lesion with the configured probability.
    Random,
    Grow,
    Shrink,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Input image (NIfTI).
    #[arg(long)]
    pub image: PathBuf,
    /// Input instance mask (NIfTI).
    #[arg(long)]
    pub mask: PathBuf,
    /// Fixed lesion amplitude; overrides the sampled one.
    #[arg(long = "lesion.amplitude")]
    pub amplitude: Option<f64>,
    /// Fixed number of progression stages.
    #[arg(long = "lesion.stages")]
    pub stages: Option<u32>,
    #[arg(long = "lesion.direction", value_enum)]
    pub direction: Option<Direction>,
    /// Disable all image-level augmentation.
    #[arg(long = "aug.off")]
    pub aug_off: bool,
}

pub fn run(ctx: &Context, a: Args) -> anyhow::Result<()> {
    let seed = ctx.require_seed("synth")?;
    require_file(&a.image, "image")?;
    require_file(&a.mask, "mask")?;
    let mut lp = ctx.cfg.lesion.clone();
    if a.amplitude.is_some() {
        lp.amplitude = a.amplitude;
    }
    if a.stages.is_some() {
        lp.stages = a.stages;
    }
    lp = match a.direction {
        Some(Direction::Grow) => lp.grow(),
        Some(Direction::Shrink) => lp.shrink(),
        _ => lp,
    };
    let ap = if a.aug_off { ImageAugParams::off() } else { ctx.cfg.aug.clone() };
    lp.validate()?;
    ap.validate()?;

    let img = load_volume(&a.image)?;
    let mask = load_mask(&a.mask)?;
    if mask.num_instances() == 0 {
        return Err(fail(
            code::EMPTY_MASK,
            format!("mask {} has no instances (K=0)", a.mask.display()),
        ));
    }
    let out = synthesize_followup(&img, &mask, &lp, &ap, seed)?;
    ensure_dir(&ctx.out)?;
    save_volume(&out.image, ctx.out.join("image.nii.gz"))?;
    save_mask(&out.mask, ctx.out.join("mask.nii.gz"))?;
    save_field(&out.total_field, ctx.out.join("field.json"))?;
    write_json(&ctx.out.join("params_used.json"), &out.params_used)
}
