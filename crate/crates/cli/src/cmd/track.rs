use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use lesiontrack::nifti::save_mask;
use lesiontrack::tracking::{
    track, IdentitySegmenter, LoadedSeries, Segmenter, TimeSeries, TrackMode,
};

use super::eval::{EvalEntry, EvalManifest};
use super::prompt::{load_prompt_file, simulate, to_prompts, PromptType};
use super::register::RegFlags;
use super::{ensure_dir, parse_triple, require_file, write_json};
use crate::fail::{code, fail};
use crate::Context;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
pub enum SegmenterKind {
    /// Intensity-band region growing inside the ROI.
    Baseline,
    /// Returns the prompt channel unchanged.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    Mask,
    Point,
    Box,
}

impl From<ModeArg> for TrackMode {
    fn from(m: ModeArg) -> TrackMode {
        match m {
            ModeArg::Mask => TrackMode::Mask,
            ModeArg::Point => TrackMode::Point,
            ModeArg::Box => TrackMode::Box,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Series manifest: `{"patient_id", "scans": [{"t", "image", "gt_mask"?}]}`.
    #[arg(long)]
    pub series: PathBuf,
    /// Prompts for the first scan; simulated from its ground truth when
    /// omitted.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Prompt kind to simulate when `--prompts` is omitted.
    #[arg(long, value_enum, default_value = "mask")]
    pub prompt_type: PromptType,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// ROI size in voxels: `N` or `X,Y,Z`.
    #[arg(long, value_parser = parse_triple::<usize>)]
    pub patch_size: Option<[usize; 3]>,
    #[arg(long, value_enum, default_value = "baseline")]
    pub segmenter: SegmenterKind,
    #[command(flatten)]
    pub reg: RegFlags,
}

pub fn pred_name(t: i64) -> String {
    format!("pred_t{t}.nii.gz")
}

pub fn run(ctx: &Context, a: Args) -> anyhow::Result<()> {
    require_file(&a.series, "series manifest")?;
    let series = TimeSeries::load(&a.series)?;
    for s in &series.scans {
        require_file(&s.image, "image")?;
        if let Some(m) = &s.gt_mask {
            require_file(m, "ground-truth mask")?;
        }
    }
    let mut cfg = ctx.cfg.tracking.clone();
    if let Some(m) = a.mode {
        cfg.mode = m.into();
    }
    if let Some(p) = a.patch_size {
        cfg.patch_size = p;
    }
    cfg.registration = a.reg.apply(cfg.registration);
    cfg.registration.validate()?;
    if a.prompts.is_none() && a.prompt_type != PromptType::Mask && ctx.seed.is_none() {
        return Err(fail(code::INVALID, "simulating point or box prompts requires --seed"));
    }

    let gts = series.load_gt_masks()?;
    let prompts = match &a.prompts {
        Some(p) => load_prompt_file(p)?,
        None => {
            let gt0 = gts[0].as_ref().ok_or_else(|| {
                fail(code::INVALID, "no --prompts given and the first scan has no gt_mask")
            })?;
            let gt_path = series.scans[0].gt_mask.as_ref().unwrap().to_string_lossy().into_owned();
            let recs = simulate(gt0, &gt0.labels(), a.prompt_type, ctx.seed.unwrap_or(0), &gt_path)?;
            let recs: Vec<_> = recs.into_iter().map(|(r, _)| r).collect();
            to_prompts(&recs, std::path::Path::new("."))?
        }
    };

    let loaded = LoadedSeries::load(&series)?;
    let baseline = ctx.cfg.segmenter.clone();
    let seg: &dyn Segmenter = match a.segmenter {
        SegmenterKind::Baseline => &baseline,
        SegmenterKind::Identity => &IdentitySegmenter,
    };
    let result = track(&loaded, &prompts, seg, &cfg)?;

    ensure_dir(&ctx.out)?;
    let mut eval = EvalManifest { scans: Vec::new() };
    for (scan, mask) in series.scans.iter().zip(&result.masks) {
        let name = pred_name(scan.t);
        save_mask(mask, ctx.out.join(&name))?;
        if let Some(g) = &scan.gt_mask {
            eval.scans.push(EvalEntry {
                patient_id: series.patient_id.clone(),
                scan_id: format!("t{}", scan.t),
                gt: std::path::absolute(g)?,
                pred: PathBuf::from(name),
            });
        }
    }
    write_json(&ctx.out.join("tracking_report.json"), &result.report)?;
    if !eval.scans.is_empty() {
        write_json(&ctx.out.join("predictions.json"), &eval)?;
    }
    Ok(())
}
