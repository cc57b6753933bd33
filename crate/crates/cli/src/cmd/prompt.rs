use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lesiontrack::nifti::{load_mask, save_mask};
use lesiontrack::prompt::{simulate_box, simulate_point, Prompt, PromptRecord};
use lesiontrack::rng::{self, tags};
use lesiontrack::{Box3, InstanceMask, Point3};

use super::{ensure_dir, read_json, require_file, resolve, write_json};
use crate::fail::{code, fail};
use crate::Context;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptType {
    Point,
    Box,
    Mask,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Instance mask to sample prompts from.
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long = "type", value_enum, default_value = "point")]
    pub kind: PromptType,
    /// Labels to prompt (repeatable); all labels when omitted.
    #[arg(long = "label")]
    pub labels: Vec<u16>,
    /// Also write each prompt channel as `prompt_<label>.nii.gz`.
    #[arg(long)]
    pub raster: bool,
}

/// Contents of `prompts.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub prompts: Vec<PromptRecord>,
}

pub const MASK_PROMPT_FILE: &str = "prompt_mask.nii.gz";

/// Simulate one prompt per label from `mask` (timepoint 0). Mask prompts
/// reference `mask_path`.
pub fn simulate(
    mask: &InstanceMask,
    labels: &[u16],
    kind: PromptType,
    seed: u64,
    mask_path: &str,
) -> anyhow::Result<Vec<(PromptRecord, Option<lesiontrack::BinaryMask>)>> {
    let mut out = Vec::with_capacity(labels.len());
    for &l in labels {
        let mut r = rng::stream(seed, &[tags::PROMPT, l as u64]);
        out.push(match kind {
            PromptType::Point => {
                let (p, ch) = simulate_point(mask, l, &mut r)?;
                (PromptRecord::from_prompt(&Prompt::Point(p), 0, Some(l)).unwrap(), Some(ch))
            }
            PromptType::Box => {
                let (b, ch) = simulate_box(mask, l, &mut r)?;
                (PromptRecord::from_prompt(&Prompt::Box(b), 0, Some(l)).unwrap(), Some(ch))
            }
            PromptType::Mask => {
                if !mask.contains_label(l) {
                    return Err(lesiontrack::Error::MissingLabel(l).into());
                }
                (
                    PromptRecord::Mask {
                        mask_path: mask_path.to_string(),
                        label: l,
                        timepoint: 0,
                    },
                    Some(mask.binary(l)),
                )
            }
        });
    }
    Ok(out)
}

/// Turn records into tracking prompts. Mask paths resolve against `base`.
pub fn to_prompts(records: &[PromptRecord], base: &Path) -> anyhow::Result<Vec<(u16, Prompt)>> {
    let mut out = Vec::with_capacity(records.len());
    let need_label = |l: Option<u16>| {
        l.ok_or_else(|| fail(code::INVALID, "tracking prompts need a label"))
    };
    for rec in records {
        let t = match rec {
            PromptRecord::Point { timepoint, .. }
            | PromptRecord::Box { timepoint, .. }
            | PromptRecord::Mask { timepoint, .. } => *timepoint,
        };
        if t != 0 {
            return Err(fail(code::INVALID, format!("prompts must refer to timepoint 0, got {t}")));
        }
        out.push(match rec {
            PromptRecord::Point { mm, label, .. } => (need_label(*label)?, Prompt::Point(Point3(*mm))),
            PromptRecord::Box { min_mm, max_mm, label, .. } => (
                need_label(*label)?,
                Prompt::Box(Box3::new(Point3(*min_mm), Point3(*max_mm))?),
            ),
            PromptRecord::Mask { mask_path, label, .. } => {
                let p = resolve(base, Path::new(mask_path));
                require_file(&p, "prompt mask")?;
                (*label, Prompt::prior_mask(&load_mask(&p)?, *label)?)
            }
        });
    }
    Ok(out)
}

pub fn load_prompt_file(path: &Path) -> anyhow::Result<Vec<(u16, Prompt)>> {
    require_file(path, "prompts")?;
    let f: PromptFile = read_json(path)?;
    to_prompts(&f.prompts, path.parent().unwrap_or(Path::new(".")))
}

pub fn run(ctx: &Context, a: Args) -> anyhow::Result<()> {
    let seed = ctx.require_seed("prompt")?;
    require_file(&a.mask, "mask")?;
    let mask = load_mask(&a.mask)?;
    let labels = if a.labels.is_empty() { mask.labels() } else { a.labels.clone() };
    let sims = simulate(&mask, &labels, a.kind, seed, MASK_PROMPT_FILE)?;
    ensure_dir(&ctx.out)?;
    if a.kind == PromptType::Mask {
        save_mask(&mask, ctx.out.join(MASK_PROMPT_FILE))?;
    }
    if a.raster {
        for (l, (_, ch)) in labels.iter().zip(&sims) {
            if let Some(ch) = ch {
                save_mask(&ch.to_instance(1), ctx.out.join(format!("prompt_{l}.nii.gz")))?;
            }
        }
    }
    write_json(
        &ctx.out.join("prompts.json"),
        &PromptFile {
            seed: Some(seed),
            prompts: sims.into_iter().map(|(r, _)| r).collect(),
        },
    )
}
