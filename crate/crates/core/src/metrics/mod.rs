//! Segmentation and tracking metrics.
//!
//! Per-lesion quantities are derived from one [`LesionMatch`] so that every
//! rate shares the same pairing. Values that are undefined for a scan (no
//! pairs, no ground-truth lesions) are `None` and are excluded from means.

mod matching;
mod overlap;
mod report;

pub use matching::{hungarian, match_centroids, match_lesions, LesionMatch, MatchedPair, MATCH_THRESHOLD_MM};
pub use overlap::{dice, nsd, surface};
pub use report::{
    aggregate, evaluate_scan, lesion_rows_csv, Counts, EvalConfig, Exclusions, LesionRow, MetricReport,
    MetricValues, PatientMetrics, ScanMetrics, TotalDiceMode, Weighting,
};

use crate::error::Result;
use crate::volume::InstanceMask;

/// Default NSD tolerance in mm.
pub const NSD_TOLERANCE_MM: f64 = 2.0;

/// Percentage of ground-truth lesions with a matched prediction; `None`
/// without ground-truth lesions.
pub fn cpm(m: &LesionMatch, total_gt: usize) -> Option<f64> {
    (total_gt > 0).then(|| 100.0 * m.pairs.len() as f64 / total_gt as f64)
}

/// Mean Dice over matched pairs; `None` without pairs.
pub fn dice_at_25(m: &LesionMatch, gt: &InstanceMask, pred: &InstanceMask) -> Result<Option<f64>> {
    if m.pairs.is_empty() {
        return Ok(None);
    }
    let mut acc = 0.0;
    for p in &m.pairs {
        acc += dice(&gt.binary(p.gt_label), &pred.binary(p.pred_label))?;
    }
    Ok(Some(acc / m.pairs.len() as f64))
}

/// Mean centroid distance over matched pairs in mm; `None` without pairs.
pub fn med(m: &LesionMatch) -> Option<f64> {
    if m.pairs.is_empty() {
        return None;
    }
    Some(m.pairs.iter().map(|p| p.distance_mm).sum::<f64>() / m.pairs.len() as f64)
}

/// Dice over all ground-truth lesions, with misses contributing zero
/// ([`TotalDiceMode::PerLesion`]), or a single voxel-pooled ratio over all
/// instances ([`TotalDiceMode::Pooled`]). `None` without ground-truth
/// lesions.
pub fn total_dice(
    m: &LesionMatch,
    gt: &InstanceMask,
    pred: &InstanceMask,
    mode: TotalDiceMode,
) -> Result<Option<f64>> {
    gt.grid().ensure_matches(pred.grid(), "total dice")?;
    let n_gt = m.pairs.len() + m.unmatched_gt.len();
    if n_gt == 0 {
        return Ok(None);
    }
    match mode {
        TotalDiceMode::PerLesion => {
            let mut acc = 0.0;
            for p in &m.pairs {
                acc += dice(&gt.binary(p.gt_label), &pred.binary(p.pred_label))?;
            }
            Ok(Some(acc / n_gt as f64))
        }
        TotalDiceMode::Pooled => {
            let mut inter = 0usize;
            for p in &m.pairs {
                inter += gt
                    .data()
                    .iter()
                    .zip(pred.data())
                    .filter(|(&a, &b)| a == p.gt_label && b == p.pred_label)
                    .count();
            }
            let denom = gt.foreground().count() + pred.foreground().count();
            Ok(Some(2.0 * inter as f64 / denom as f64))
        }
    }
}
