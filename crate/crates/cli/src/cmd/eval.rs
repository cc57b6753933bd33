use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lesiontrack::metrics::{aggregate, evaluate_scan, lesion_rows_csv, TotalDiceMode, Weighting};
use lesiontrack::nifti::load_mask;

use super::{ensure_dir, read_json, require_file, resolve, write_json};
use crate::fail::{code, fail};
use crate::Context;

/// Evaluation manifest; relative paths resolve against its directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalManifest {
    pub scans: Vec<EvalEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalEntry {
    pub patient_id: String,
    pub scan_id: String,
    pub gt: PathBuf,
    pub pred: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TotalDiceArg {
    PerLesion,
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum WeightingArg {
    PatientMean,
    ScanMean,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// `{"scans": [{"patient_id", "scan_id", "gt", "pred"}]}`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Centroid distance gate for matching, mm.
    #[arg(long)]
    pub threshold_mm: Option<f64>,
    /// Surface tolerance for NSD, mm.
    #[arg(long)]
    pub nsd_tolerance_mm: Option<f64>,
    #[arg(long, value_enum)]
    pub total_dice: Option<TotalDiceArg>,
    #[arg(long, value_enum)]
    pub weighting: Option<WeightingArg>,
}

pub fn run(ctx: &Context, a: Args) -> anyhow::Result<()> {
    require_file(&a.manifest, "manifest")?;
    let manifest: EvalManifest = read_json(&a.manifest)?;
    if manifest.scans.is_empty() {
        return Err(fail(code::INVALID, "evaluation manifest lists no scans"));
    }
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let mut cfg = ctx.cfg.eval.clone();
    if let Some(v) = a.threshold_mm {
        cfg.threshold_mm = v;
    }
    if let Some(v) = a.nsd_tolerance_mm {
        cfg.nsd_tolerance_mm = v;
    }
    if let Some(v) = a.total_dice {
        cfg.total_dice = match v {
            TotalDiceArg::PerLesion => TotalDiceMode::PerLesion,
            TotalDiceArg::Pooled => TotalDiceMode::Pooled,
        };
    }
    if let Some(v) = a.weighting {
        cfg.weighting = match v {
            WeightingArg::PatientMean => Weighting::PatientMean,
            WeightingArg::ScanMean => Weighting::ScanMean,
        };
    }
    cfg.validate()?;
    let paths: Vec<(PathBuf, PathBuf)> = manifest
        .scans
        .iter()
        .map(|e| (resolve(base, &e.gt), resolve(base, &e.pred)))
        .collect();
    for (e, (g, p)) in manifest.scans.iter().zip(&paths) {
        require_file(g, &format!("scan {}/{}: gt", e.patient_id, e.scan_id))?;
        require_file(p, &format!("scan {}/{}: pred", e.patient_id, e.scan_id))?;
    }
    let mut scans = Vec::with_capacity(paths.len());
    for (e, (g, p)) in manifest.scans.iter().zip(&paths) {
        let gt = load_mask(g)?;
        let pred = load_mask(p)?;
        scans.push(evaluate_scan(&e.patient_id, &e.scan_id, &gt, &pred, &cfg)?);
    }
    let report = aggregate(scans, cfg.weighting)?;
    ensure_dir(&ctx.out)?;
    write_json(&ctx.out.join("metrics.json"), &report)?;
    std::fs::write(ctx.out.join("lesions.csv"), lesion_rows_csv(&report)?)?;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}
