//! Scan-level evaluation and patient-weighted aggregation.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::matching::{match_lesions, MATCH_THRESHOLD_MM};
use super::{cpm, dice, dice_at_25, med, nsd, total_dice, NSD_TOLERANCE_MM};
use crate::error::{Error, Result};
use crate::volume::InstanceMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TotalDiceMode {
    /// Mean per-lesion Dice over ground-truth lesions, misses count as 0.
    #[default]
    PerLesion,
    /// One Dice over the voxels of all matched pairs against all voxels.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Mean over each patient's scans, then equal weight per patient.
    #[default]
    PatientMean,
    /// Every scan weighs the same.
    ScanMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub threshold_mm: f64,
    pub nsd_tolerance_mm: f64,
    pub total_dice: TotalDiceMode,
    pub weighting: Weighting,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            threshold_mm: MATCH_THRESHOLD_MM,
            nsd_tolerance_mm: NSD_TOLERANCE_MM,
            total_dice: TotalDiceMode::PerLesion,
            weighting: Weighting::PatientMean,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_mm >= 0.0 && self.threshold_mm.is_finite()) {
            return Err(Error::InvalidInput("match threshold must be a finite non-negative distance".into()));
        }
        if !(self.nsd_tolerance_mm >= 0.0 && self.nsd_tolerance_mm.is_finite()) {
            return Err(Error::InvalidInput("NSD tolerance must be a finite non-negative distance".into()));
        }
        Ok(())
    }
}

/// One value per metric; `None` where undefined.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    /// Foreground Dice over all instances.
    pub dice: Option<f64>,
    /// Foreground NSD over all instances.
    pub nsd: Option<f64>,
    /// Percent in `[0, 100]`.
    pub cpm_at_25: Option<f64>,
    pub dice_at_25: Option<f64>,
    pub med_mm: Option<f64>,
    pub total_dice: Option<f64>,
}

impl MetricValues {
    fn fields(&self) -> [Option<f64>; 6] {
        [self.dice, self.nsd, self.cpm_at_25, self.dice_at_25, self.med_mm, self.total_dice]
    }

    fn from_fields(f: [Option<f64>; 6]) -> Self {
        MetricValues {
            dice: f[0],
            nsd: f[1],
            cpm_at_25: f[2],
            dice_at_25: f[3],
            med_mm: f[4],
            total_dice: f[5],
        }
    }

    /// Field-wise mean of the present values.
    fn mean<'a>(items: impl IntoIterator<Item = &'a MetricValues>) -> Self {
        let mut sum = [0.0; 6];
        let mut n = [0usize; 6];
        for v in items {
            for (k, x) in v.fields().into_iter().enumerate() {
                if let Some(x) = x {
                    sum[k] += x;
                    n[k] += 1;
                }
            }
        }
        Self::from_fields(std::array::from_fn(|k| (n[k] > 0).then(|| sum[k] / n[k] as f64)))
    }
}

/// One CSV row: a matched pair, a missed ground-truth lesion or an
/// unmatched prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionRow {
    pub patient_id: String,
    pub scan_id: String,
    pub gt_label: Option<u16>,
    pub pred_label: Option<u16>,
    pub matched: bool,
    pub distance_mm: Option<f64>,
    pub dice: Option<f64>,
    pub nsd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMetrics {
    pub patient_id: String,
    pub scan_id: String,
    pub n_gt: usize,
    pub n_pred: usize,
    pub n_matched: usize,
    pub values: MetricValues,
    pub lesions: Vec<LesionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientMetrics {
    pub patient_id: String,
    pub scans: usize,
    pub values: MetricValues,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub lesions: usize,
    pub scans: usize,
    pub patients: usize,
}

/// Scans whose value was undefined and left out of each mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Exclusions {
    pub dice: usize,
    pub nsd: usize,
    pub cpm_at_25: usize,
    pub dice_at_25: usize,
    pub med_mm: usize,
    pub total_dice: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub weighting: Weighting,
    pub overall: MetricValues,
    pub per_patient: Vec<PatientMetrics>,
    pub per_scan: Vec<ScanMetrics>,
    pub counts: Counts,
    pub excluded: Exclusions,
}

/// Match, score and tabulate one scan.
pub fn evaluate_scan(
    patient_id: &str,
    scan_id: &str,
    gt: &InstanceMask,
    pred: &InstanceMask,
    cfg: &EvalConfig,
) -> Result<ScanMetrics> {
    cfg.validate()?;
    if !gt.grid().matches(pred.grid()) {
        return Err(Error::GridMismatch(format!(
            "scan {scan_id} of patient {patient_id}: prediction grid {:?}/{:?}/{:?} differs from ground truth {:?}/{:?}/{:?}",
            pred.grid().shape,
            pred.grid().spacing,
            pred.grid().origin,
            gt.grid().shape,
            gt.grid().spacing,
            gt.grid().origin
        )));
    }
    let m = match_lesions(gt, pred, cfg.threshold_mm)?;
    let n_gt = m.pairs.len() + m.unmatched_gt.len();
    let n_pred = m.pairs.len() + m.unmatched_pred.len();
    let (fg_gt, fg_pred) = (gt.foreground(), pred.foreground());
    let values = MetricValues {
        dice: Some(dice(&fg_gt, &fg_pred)?),
        nsd: Some(nsd(&fg_gt, &fg_pred, cfg.nsd_tolerance_mm)?),
        cpm_at_25: cpm(&m, n_gt),
        dice_at_25: dice_at_25(&m, gt, pred)?,
        med_mm: med(&m),
        total_dice: total_dice(&m, gt, pred, cfg.total_dice)?,
    };

    let row = |g: Option<u16>, p: Option<u16>| LesionRow {
        patient_id: patient_id.to_string(),
        scan_id: scan_id.to_string(),
        gt_label: g,
        pred_label: p,
        matched: false,
        distance_mm: None,
        dice: None,
        nsd: None,
    };
    let mut lesions = Vec::with_capacity(n_gt + m.unmatched_pred.len());
    for p in &m.pairs {
        let (a, b) = (gt.binary(p.gt_label), pred.binary(p.pred_label));
        lesions.push(LesionRow {
            matched: true,
            distance_mm: Some(p.distance_mm),
            dice: Some(dice(&a, &b)?),
            nsd: Some(nsd(&a, &b, cfg.nsd_tolerance_mm)?),
            ..row(Some(p.gt_label), Some(p.pred_label))
        });
    }
    for &g in &m.unmatched_gt {
        lesions.push(LesionRow {
            dice: Some(0.0),
            nsd: Some(0.0),
            ..row(Some(g), None)
        });
    }
    for &p in &m.unmatched_pred {
        lesions.push(row(None, Some(p)));
    }
    Ok(ScanMetrics {
        patient_id: patient_id.to_string(),
        scan_id: scan_id.to_string(),
        n_gt,
        n_pred,
        n_matched: m.pairs.len(),
        values,
        lesions,
    })
}

fn canonical_order(a: &ScanMetrics, b: &ScanMetrics) -> Ordering {
    (&a.patient_id, &a.scan_id).cmp(&(&b.patient_id, &b.scan_id)).then_with(|| {
        let key = |s: &ScanMetrics| s.values.fields().map(|v| v.unwrap_or(f64::NAN));
        key(a)
            .iter()
            .zip(key(b).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Scan values averaged per patient, then over patients (or over all scans
/// with [`Weighting::ScanMean`]). Input order does not matter.
pub fn aggregate(scans: Vec<ScanMetrics>, weighting: Weighting) -> Result<MetricReport> {
    if scans.is_empty() {
        return Err(Error::InvalidInput("nothing to aggregate".into()));
    }
    let mut scans = scans;
    scans.sort_by(canonical_order);

    let mut by_patient: BTreeMap<&str, Vec<&ScanMetrics>> = BTreeMap::new();
    for s in &scans {
        by_patient.entry(&s.patient_id).or_default().push(s);
    }
    let per_patient: Vec<PatientMetrics> = by_patient
        .iter()
        .map(|(id, list)| PatientMetrics {
            patient_id: id.to_string(),
            scans: list.len(),
            values: MetricValues::mean(list.iter().map(|s| &s.values)),
        })
        .collect();
    let overall = match weighting {
        Weighting::PatientMean => MetricValues::mean(per_patient.iter().map(|p| &p.values)),
        Weighting::ScanMean => MetricValues::mean(scans.iter().map(|s| &s.values)),
    };

    let missing = |k: usize| scans.iter().filter(|s| s.values.fields()[k].is_none()).count();
    let excluded = Exclusions {
        dice: missing(0),
        nsd: missing(1),
        cpm_at_25: missing(2),
        dice_at_25: missing(3),
        med_mm: missing(4),
        total_dice: missing(5),
    };
    let counts = Counts {
        lesions: scans.iter().map(|s| s.n_gt).sum(),
        scans: scans.len(),
        patients: per_patient.len(),
    };
    Ok(MetricReport {
        weighting,
        overall,
        per_patient,
        per_scan: scans,
        counts,
        excluded,
    })
}

/// Per-lesion rows of every scan as CSV with a header line.
pub fn lesion_rows_csv(report: &MetricReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &report.per_scan {
        for r in &s.lesions {
            w.serialize(r)
                .map_err(|e| Error::InvalidInput(format!("CSV export failed: {e}")))?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("CSV export failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}
