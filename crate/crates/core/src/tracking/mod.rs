//! Autoregressive lesion tracking over a patient's scans.
//!
//! For each consecutive pair the scans are registered, the previous result
//! is carried into the next scan (as a mask through the backward field, or
//! as a point or box through the forward field), a patch is cropped around
//! the carried prompt and segmented, and the patch mask is pasted back.

mod segmenter;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use segmenter::{BaselineSegmenter, IdentitySegmenter, SegFlag, Segmentation, Segmenter};

use crate::error::{Error, Result};
use crate::field::{binary_centroid, DisplacementField};
use crate::grid::{Box3, Point3};
use crate::nifti;
use crate::par;
use crate::prompt::{propagate_binary, propagate_box, rasterize, Prompt};
use crate::registration::{register, Diagnostics, RegistrationConfig, Similarity};
use crate::volume::{crop_binary, crop_roi, paste_back, BinaryMask, InstanceMask, Placement, Volume};

/// Default ROI in voxels.
pub const DEFAULT_PATCH_SIZE: [usize; 3] = [128, 128, 96];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub t: i64,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_mask: Option<PathBuf>,
}

/// Series manifest: `{"patient_id", "scans": [{"t", "image", "gt_mask"?}]}`.
/// Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub patient_id: String,
    pub scans: Vec<ScanEntry>,
}

impl TimeSeries {
    pub fn validate(&self) -> Result<()> {
        if self.scans.is_empty() {
            return Err(Error::InvalidInput(format!("series {} has no scans", self.patient_id)));
        }
        if self.scans.windows(2).any(|w| w[0].t >= w[1].t) {
            return Err(Error::InvalidInput(format!(
                "series {}: timepoints must be strictly increasing",
                self.patient_id
            )));
        }
        Ok(())
    }

    /// Read and validate a manifest, making scan paths absolute.
    pub fn load(path: &Path) -> Result<TimeSeries> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s: TimeSeries = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut s.scans {
            e.image = base.join(&e.image);
            if let Some(m) = &mut e.gt_mask {
                *m = base.join(&*m);
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn timepoints(&self) -> Vec<i64> {
        self.scans.iter().map(|e| e.t).collect()
    }

    pub fn load_images(&self) -> Result<Vec<Volume>> {
        self.scans.iter().map(|e| nifti::load_volume(&e.image)).collect()
    }

    /// Ground-truth masks where the manifest lists them.
    pub fn load_gt_masks(&self) -> Result<Vec<Option<InstanceMask>>> {
        self.scans
            .iter()
            .map(|e| e.gt_mask.as_deref().map(nifti::load_mask).transpose())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackMode {
    /// Carry the previous mask through the backward field.
    #[default]
    Mask,
    /// Carry a point through the forward field.
    Point,
    /// Carry a box through the forward field.
    Box,
}

impl std::str::FromStr for TrackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask" => Ok(TrackMode::Mask),
            "point" => Ok(TrackMode::Point),
            "box" => Ok(TrackMode::Box),
            _ => Err(Error::InvalidInput(format!("unknown tracking mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub mode: TrackMode,
    pub patch_size: [usize; 3],
    pub registration: RegistrationConfig,
}

impl Default for TrackingConfig {
    /// Registration uses windowed NCC here: global NCC is dominated by the
    /// body outline and leaves lesion-scale misalignment inside it.
    fn default() -> Self {
        TrackingConfig {
            mode: TrackMode::Mask,
            patch_size: DEFAULT_PATCH_SIZE,
            registration: RegistrationConfig {
                similarity: Similarity::Local { radius: 2 },
                ..Default::default()
            },
        }
    }
}

/// Output of [`segment_single`].
#[derive(Debug, Clone, PartialEq)]
pub struct SingleResult {
    /// Binary mask on the image grid.
    pub mask: BinaryMask,
    pub flags: Vec<SegFlag>,
    pub placement: Placement,
}

/// Crop around the prompt center, rasterize the prompt onto the patch,
/// segment, and paste the result back onto the image grid.
pub fn segment_single(
    img: &Volume,
    prompt: &Prompt,
    seg: &dyn Segmenter,
    patch_size: [usize; 3],
) -> Result<SingleResult> {
    let center = prompt
        .center()
        .ok_or_else(|| Error::InvalidInput("mask prompt is empty".into()))?;
    let (patch, placement) = crop_roi(img, center, patch_size)?;
    let channel = match prompt {
        Prompt::Mask(m) if m.grid().matches(img.grid()) => {
            let c = crop_binary(&BinaryMask::new(*img.grid(), m.data().to_vec())?, &placement)?;
            if c.is_empty() {
                return Err(Error::OutOfBounds("mask prompt does not intersect the patch".into()));
            }
            c
        }
        _ => rasterize(prompt, patch.grid())?,
    };
    let out = seg.segment(&patch, &channel)?;
    if out.mask.grid() != patch.grid() {
        return Err(Error::Segmenter(format!(
            "{} returned a mask of shape {:?} for a {:?} patch",
            seg.name(),
            out.mask.grid().shape,
            patch.grid().shape
        )));
    }
    Ok(SingleResult {
        mask: paste_back(&out.mask, &placement)?,
        flags: out.flags,
        placement,
    })
}

/// Prompt geometry as recorded in the tracking report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum UsedPrompt {
    Point { mm: [f64; 3] },
    Box { min_mm: [f64; 3], max_mm: [f64; 3] },
    Mask { centroid_mm: Option<[f64; 3]>, voxels: usize },
}

impl UsedPrompt {
    fn of(p: &Prompt) -> UsedPrompt {
        match p {
            Prompt::Point(q) => UsedPrompt::Point { mm: q.0 },
            Prompt::Box(b) => UsedPrompt::Box {
                min_mm: b.min.0,
                max_mm: b.max.0,
            },
            Prompt::Mask(m) => UsedPrompt::Mask {
                centroid_mm: binary_centroid(m).map(|c| c.0),
                voxels: m.count(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackFlag {
    /// The prediction is empty.
    Empty,
    /// The carried mask vanished; a point at the last known center was used.
    FallbackPoint,
    /// The carried prompt fell outside the scan and was clipped to it.
    ClippedPrompt,
    /// Registration of the incoming pair failed; identity fields were used.
    RegistrationFallback,
    /// Segmentation raised an error; the prediction is empty.
    SegmenterError,
    ReachedRoiBound,
    LowConfidence,
}

impl From<SegFlag> for TrackFlag {
    fn from(f: SegFlag) -> Self {
        match f {
            SegFlag::Empty => TrackFlag::Empty,
            SegFlag::ReachedRoiBound => TrackFlag::ReachedRoiBound,
            SegFlag::LowConfidence => TrackFlag::LowConfidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionReport {
    pub label: u16,
    pub prompt: UsedPrompt,
    pub voxels: usize,
    pub centroid_mm: Option<[f64; 3]>,
    pub empty: bool,
    pub flags: Vec<TrackFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Registration of the pair ending at a timepoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub from_index: usize,
    pub diagnostics: Option<Diagnostics>,
    pub identity_fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimepointReport {
    pub index: usize,
    pub t: i64,
    /// Absent for the first scan.
    pub registration: Option<PairReport>,
    pub lesions: Vec<LesionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub patient_id: String,
    pub mode: TrackMode,
    pub segmenter: String,
    pub patch_size: [usize; 3],
    pub timepoints: Vec<TimepointReport>,
}

impl TrackingReport {
    pub fn empty_count(&self) -> usize {
        self.timepoints
            .iter()
            .flat_map(|t| &t.lesions)
            .filter(|l| l.empty)
            .count()
    }
}

#[derive(Debug, Clone)]
pub struct TrackingResult {
    pub report: TrackingReport,
    /// One label map per timepoint on that scan's grid; each tracked lesion
    /// keeps its initial label.
    pub masks: Vec<InstanceMask>,
}

/// Scans loaded into memory, in time order.
#[derive(Debug, Clone)]
pub struct LoadedSeries {
    pub patient_id: String,
    pub timepoints: Vec<i64>,
    pub images: Vec<Volume>,
}

impl LoadedSeries {
    pub fn load(s: &TimeSeries) -> Result<LoadedSeries> {
        s.validate()?;
        Ok(LoadedSeries {
            patient_id: s.patient_id.clone(),
            timepoints: s.timepoints(),
            images: s.load_images()?,
        })
    }

    /// Series with timepoints `0..n`.
    pub fn from_images(patient_id: &str, images: Vec<Volume>) -> LoadedSeries {
        LoadedSeries {
            patient_id: patient_id.to_string(),
            timepoints: (0..images.len() as i64).collect(),
            images,
        }
    }
}

/// Per-lesion state carried from one timepoint to the next.
struct Carried {
    /// Latest prediction (mask mode).
    mask: BinaryMask,
    /// Geometric prompt (point and box modes).
    geometric: Option<Prompt>,
    /// Last known center, followed through the forward fields while the
    /// prediction stays empty.
    anchor: Point3,
}

/// Fields for one consecutive pair; identity when registration failed.
#[derive(Debug, Clone)]
pub struct PairFields {
    pub u_fwd: DisplacementField,
    pub u_bwd: DisplacementField,
    pub report: PairReport,
}

/// Register every consecutive pair of the series. Failures become identity
/// fields with the error recorded.
pub fn register_series(series: &LoadedSeries, cfg: &RegistrationConfig) -> Vec<PairFields> {
    let idx: Vec<usize> = (1..series.images.len()).collect();
    par::map_slice(&idx, |&t| register_pair(&series.images[t - 1], &series.images[t], cfg, t - 1))
}

fn register_pair(a: &Volume, b: &Volume, cfg: &RegistrationConfig, from_index: usize) -> PairFields {
    match register(a, b, cfg) {
        Ok(r) => {
            let report = PairReport {
                from_index,
                diagnostics: Some(r.diagnostics()),
                identity_fallback: false,
                error: None,
            };
            PairFields {
                u_fwd: r.u_fwd,
                u_bwd: r.u_bwd,
                report,
            }
        }
        Err(e) => PairFields {
            u_fwd: DisplacementField::zeros(*a.grid()),
            u_bwd: DisplacementField::zeros(*b.grid()),
            report: PairReport {
                from_index,
                diagnostics: None,
                identity_fallback: true,
                error: Some(e.to_string()),
            },
        },
    }
}

/// Map a point forward, clipping it to `target` bounds; returns whether it
/// had to be clipped.
fn carry_point(p: Point3, pair: &PairFields, target: &crate::grid::Grid) -> (Point3, bool) {
    let q = p.offset(pair.u_fwd.sample_mm_clamped(p));
    let c = target.clamp_mm(q);
    (c, c != q)
}

fn carry_box(b: &Box3, pair: &PairFields, target: &crate::grid::Grid) -> (Box3, bool) {
    match propagate_box(b, &pair.u_fwd) {
        Ok(nb) => {
            let inside = target.contains_mm(nb.min) && target.contains_mm(nb.max);
            let clipped = Box3 {
                min: target.clamp_mm(nb.min),
                max: target.clamp_mm(nb.max),
            };
            (clipped, !inside)
        }
        Err(_) => {
            let c = target.clamp_mm(b.center());
            (Box3 { min: c, max: c }, true)
        }
    }
}

/// Geometric state for point/box modes, derived from the initial prompt
/// when it has the right kind and from the first prediction otherwise.
fn initial_geometric(mode: TrackMode, p0: &Prompt, y0: &BinaryMask) -> Option<Prompt> {
    match (mode, p0) {
        (TrackMode::Mask, _) => None,
        (TrackMode::Point, Prompt::Point(_)) | (TrackMode::Box, Prompt::Box(_)) => Some(p0.clone()),
        (TrackMode::Point, _) => binary_centroid(y0).or_else(|| p0.center()).map(Prompt::Point),
        (TrackMode::Box, _) => {
            let g = y0.grid();
            let pts: Vec<Point3> = (0..g.len())
                .filter(|&i| y0.data()[i])
                .map(|i| g.voxel_center(g.coords(i)))
                .collect();
            Box3::enclosing(&pts)
                .or_else(|| p0.center().map(|c| Box3 { min: c, max: c }))
                .map(Prompt::Box)
        }
    }
}

fn segment_lesion(
    img: &Volume,
    label: u16,
    prompt: Prompt,
    seg: &dyn Segmenter,
    patch: [usize; 3],
    mut flags: Vec<TrackFlag>,
) -> (LesionReport, BinaryMask) {
    let used = UsedPrompt::of(&prompt);
    let (mask, error) = match segment_single(img, &prompt, seg, patch) {
        Ok(r) => {
            flags.extend(r.flags.into_iter().map(TrackFlag::from));
            (r.mask, None)
        }
        Err(e) => {
            flags.push(TrackFlag::SegmenterError);
            (BinaryMask::empty(*img.grid()), Some(e.to_string()))
        }
    };
    let empty = mask.is_empty();
    if empty {
        flags.push(TrackFlag::Empty);
    }
    flags.sort();
    flags.dedup();
    let report = LesionReport {
        label,
        prompt: used,
        voxels: mask.count(),
        centroid_mm: binary_centroid(&mask).map(|c| c.0),
        empty,
        flags,
        error,
    };
    (report, mask)
}

fn combine(grid: crate::grid::Grid, labelled: &[(u16, &BinaryMask)]) -> Result<InstanceMask> {
    let mut data = vec![0u16; grid.len()];
    // lower labels keep voxels claimed by several lesions
    for &(l, m) in labelled.iter().rev() {
        for (d, &b) in data.iter_mut().zip(m.data()) {
            if b {
                *d = l;
            }
        }
    }
    let k = labelled.iter().map(|&(l, _)| l).max().unwrap_or(0);
    InstanceMask::new(grid, data, k)
}

/// Track each `(label, prompt)` given on the first scan through the series.
///
/// Registration failures and empty predictions never abort the run; they
/// are recorded as flags in the report.
pub fn track(
    series: &LoadedSeries,
    prompts: &[(u16, Prompt)],
    seg: &dyn Segmenter,
    cfg: &TrackingConfig,
) -> Result<TrackingResult> {
    check_series(series)?;
    cfg.registration.validate()?;
    let pairs = register_series(series, &cfg.registration);
    track_registered(series, &pairs, prompts, seg, cfg)
}

fn check_series(series: &LoadedSeries) -> Result<()> {
    let n = series.images.len();
    if n == 0 || series.timepoints.len() != n {
        return Err(Error::InvalidInput("series needs one timepoint per image and at least one scan".into()));
    }
    if series.timepoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("timepoints must be strictly increasing".into()));
    }
    Ok(())
}

/// [`track`] with the pair registrations supplied, e.g. to compare modes on
/// the same fields. `cfg.registration` is ignored.
pub fn track_registered(
    series: &LoadedSeries,
    pairs: &[PairFields],
    prompts: &[(u16, Prompt)],
    seg: &dyn Segmenter,
    cfg: &TrackingConfig,
) -> Result<TrackingResult> {
    check_series(series)?;
    let n = series.images.len();
    if pairs.len() + 1 != n {
        return Err(Error::InvalidInput(format!(
            "{} pair registrations supplied for {n} scans",
            pairs.len()
        )));
    }
    let mut labels: Vec<u16> = prompts.iter().map(|p| p.0).collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() != prompts.len() || labels.first() == Some(&0) {
        return Err(Error::InvalidInput("lesion labels must be distinct and non-zero".into()));
    }

    let mut order: Vec<usize> = (0..prompts.len()).collect();
    order.sort_by_key(|&i| prompts[i].0);
    let prompts: Vec<(u16, Prompt)> = order.into_iter().map(|i| prompts[i].clone()).collect();

    // first scan: prompts must be valid here, so errors propagate
    let img0 = &series.images[0];
    let first: Vec<Result<SingleResult>> =
        par::map_slice(&prompts, |(_, p)| segment_single(img0, p, seg, cfg.patch_size));
    let mut carried = Vec::with_capacity(prompts.len());
    let mut lesions0 = Vec::with_capacity(prompts.len());
    for ((label, p), r) in prompts.iter().zip(first) {
        let r = r?;
        let mut flags: Vec<TrackFlag> = r.flags.iter().copied().map(TrackFlag::from).collect();
        let empty = r.mask.is_empty();
        if empty {
            flags.push(TrackFlag::Empty);
        }
        flags.sort();
        flags.dedup();
        let anchor = binary_centroid(&r.mask)
            .or_else(|| p.center())
            .ok_or_else(|| Error::InvalidInput(format!("prompt for lesion {label} has no center")))?;
        lesions0.push(LesionReport {
            label: *label,
            prompt: UsedPrompt::of(p),
            voxels: r.mask.count(),
            centroid_mm: binary_centroid(&r.mask).map(|c| c.0),
            empty,
            flags,
            error: None,
        });
        carried.push(Carried {
            geometric: initial_geometric(cfg.mode, p, &r.mask),
            mask: r.mask,
            anchor,
        });
    }
    let mut masks = vec![combine(
        *img0.grid(),
        &labels.iter().copied().zip(carried.iter().map(|c| &c.mask)).collect::<Vec<_>>(),
    )?];
    let mut timepoints = vec![TimepointReport {
        index: 0,
        t: series.timepoints[0],
        registration: None,
        lesions: lesions0,
    }];

    for (t, pair) in (1..n).zip(pairs) {
        let img = &series.images[t];
        let target = *img.grid();
        let mut base_flags = Vec::new();
        if pair.report.identity_fallback {
            base_flags.push(TrackFlag::RegistrationFallback);
        }
        // decide each lesion's prompt sequentially, segment in parallel
        let mut jobs: Vec<(u16, Prompt, Vec<TrackFlag>)> = Vec::with_capacity(carried.len());
        for (label, c) in labels.iter().zip(carried.iter_mut()) {
            let mut flags = base_flags.clone();
            let (anchor, clipped) = carry_point(c.anchor, &pair, &target);
            if clipped {
                flags.push(TrackFlag::ClippedPrompt);
            }
            let fallback = |flags: &mut Vec<TrackFlag>| {
                flags.push(TrackFlag::FallbackPoint);
                Prompt::Point(anchor)
            };
            let prompt = match cfg.mode {
                TrackMode::Mask => {
                    if c.mask.is_empty() {
                        fallback(&mut flags)
                    } else {
                        match propagate_binary(&c.mask, &pair.u_bwd) {
                            Ok(pm) if !pm.empty => Prompt::Mask(pm.mask),
                            _ => fallback(&mut flags),
                        }
                    }
                }
                TrackMode::Point => match &c.geometric {
                    Some(Prompt::Point(p)) => {
                        let (q, clip) = carry_point(*p, &pair, &target);
                        if clip {
                            flags.push(TrackFlag::ClippedPrompt);
                        }
                        Prompt::Point(q)
                    }
                    _ => fallback(&mut flags),
                },
                TrackMode::Box => match &c.geometric {
                    Some(Prompt::Box(b)) => {
                        let (nb, clip) = carry_box(b, &pair, &target);
                        if clip {
                            flags.push(TrackFlag::ClippedPrompt);
                        }
                        Prompt::Box(nb)
                    }
                    _ => fallback(&mut flags),
                },
            };
            if matches!(prompt, Prompt::Point(_) | Prompt::Box(_)) && cfg.mode != TrackMode::Mask {
                c.geometric = Some(prompt.clone());
            }
            c.anchor = anchor;
            jobs.push((*label, prompt, flags));
        }
        let done: Vec<(LesionReport, BinaryMask)> = par::map_slice(&jobs, |(l, p, f)| {
            segment_lesion(img, *l, p.clone(), seg, cfg.patch_size, f.clone())
        });
        let mut lesions = Vec::with_capacity(done.len());
        for (c, (rep, mask)) in carried.iter_mut().zip(done) {
            if let Some(ctr) = binary_centroid(&mask) {
                c.anchor = ctr;
            }
            c.mask = mask;
            lesions.push(rep);
        }
        masks.push(combine(
            target,
            &labels.iter().copied().zip(carried.iter().map(|c| &c.mask)).collect::<Vec<_>>(),
        )?);
        timepoints.push(TimepointReport {
            index: t,
            t: series.timepoints[t],
            registration: Some(pair.report.clone()),
            lesions,
        });
    }

    Ok(TrackingResult {
        report: TrackingReport {
            patient_id: series.patient_id.clone(),
            mode: cfg.mode,
            segmenter: seg.name().to_string(),
            patch_size: cfg.patch_size,
            timepoints,
        },
        masks,
    })
}
