use serde::Serialize;

use lesiontrack::nifti::{save_mask, save_volume};
use lesiontrack::synth::{phantom, PhantomLesion, PhantomSpec};

use super::{ensure_dir, parse_pair, parse_triple, write_json};
use crate::fail::{code, fail};
use crate::Context;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Grid shape in voxels: `N` or `X,Y,Z`.
    #[arg(long, value_parser = parse_triple::<usize>)]
    pub shape: Option<[usize; 3]>,
    /// Voxel spacing in mm: `S` or `SX,SY,SZ`.
    #[arg(long, value_parser = parse_triple::<f64>)]
    pub spacing: Option<[f64; 3]>,
    /// Number of ellipsoidal lesions.
    #[arg(long)]
    pub lesions: Option<usize>,
    /// Lesion semi-axis range in mm: `LO,HI`.
    #[arg(long, value_parser = parse_pair)]
    pub radius: Option<[f64; 2]>,
    /// Lesion intensity offset above tissue.
    #[arg(long)]
    pub contrast: Option<f64>,
    /// Gaussian noise std.
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Serialize)]
struct PhantomMeta<'a> {
    seed: u64,
    spec: &'a PhantomSpec,
    image: &'static str,
    mask: &'static str,
    lesions: &'a [PhantomLesion],
}

pub fn run(ctx: &Context, a: Args) -> anyhow::Result<()> {
    let seed = ctx.require_seed("phantom")?;
    let mut spec = ctx.cfg.phantom.clone();
    if let Some(v) = a.shape {
        spec.shape = v;
    }
    if let Some(v) = a.spacing {
        spec.spacing = v;
    }
    if let Some(v) = a.lesions {
        spec.lesions = v;
    }
    if let Some(v) = a.radius {
        spec.radius_mm = v;
    }
    if let Some(v) = a.contrast {
        spec.contrast = v;
    }
    if let Some(v) = a.noise {
        spec.noise = v;
    }
    // Every phantom failure is a spec problem, never I/O.
    let ph = phantom(&spec, seed).map_err(|e| fail(code::INVALID, format!("invalid phantom spec: {e}")))?;
    ensure_dir(&ctx.out)?;
    save_volume(&ph.image, ctx.out.join("image.nii.gz"))?;
    save_mask(&ph.mask, ctx.out.join("mask.nii.gz"))?;
    write_json(
        &ctx.out.join("phantom.json"),
        &PhantomMeta {
            seed,
            spec: &spec,
            image: "image.nii.gz",
            mask: "mask.nii.gz",
            lesions: &ph.lesions,
        },
    )
}
