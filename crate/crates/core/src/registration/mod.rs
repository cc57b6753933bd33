//! Symmetric deformable registration.
//!
//! A pair of displacement fields is optimized directly: `u_fwd` lives on the
//! baseline grid and maps baseline points into the follow-up frame, `u_bwd`
//! lives on the follow-up grid and maps back. The objective is
//!
//! ```text
//! [1 - sim(baseline, followup o phi_fwd)] + [1 - sim(followup, baseline o phi_bwd)]
//!     + lambda * [G(u_fwd, u_bwd) + G(u_bwd, u_fwd)]
//! ```
//!
//! where `G(a, b)` is the mean squared deviation of the Jacobian of
//! `phi_a o phi_b` from the identity. Both images are resampled to a fixed
//! working shape spanning the baseline extent, and optimization runs coarse
//! to fine with normalized, smoothed gradient steps that are only accepted
//! when the objective decreases.

mod gradicon;
mod similarity;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use gradicon::gradicon_penalty;
pub use similarity::{ncc_values, Similarity};

use crate::error::{Error, Result};
use crate::field::gaussian::{blur_vec, gaussian_blur};
use crate::field::{DisplacementField, KernelSpec};
use crate::grid::Grid;
use crate::volume::{resample_to_grid, Interp, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    /// Voxel shape both images are resampled to before optimization.
    pub work_shape: [usize; 3],
    /// Downsampling factors, coarse to fine.
    pub levels: Vec<usize>,
    pub iters_per_level: Vec<usize>,
    /// Weight of the inverse-consistency term. 1.5 is a common choice for
    /// this regularizer, not a tuned value.
    pub lambda: f64,
    /// Initial largest per-step update, in voxels of the current level.
    pub step_size: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// Stop a level once an accepted step improves the objective by less
    /// than this relative amount.
    pub convergence_tol: f64,
    /// Gaussian smoothing (voxels) applied to raw gradients; 0 disables.
    pub grad_sigma: f64,
    pub similarity: Similarity,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            work_shape: [175; 3],
            levels: vec![4, 2, 1],
            iters_per_level: vec![100, 100, 50],
            lambda: 1.5,
            step_size: 1.0,
            max_step: 2.0,
            min_step: 1e-3,
            convergence_tol: 1e-6,
            grad_sigma: 1.0,
            similarity: Similarity::Global,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda {} must be >= 0", self.lambda)));
        }
        if self.levels.is_empty() || self.levels.len() != self.iters_per_level.len() {
            return Err(Error::InvalidInput(
                "levels and iters_per_level must be non-empty and of equal length".into(),
            ));
        }
        if self.levels.iter().any(|&f| f == 0) || self.work_shape.iter().any(|&n| n == 0) {
            return Err(Error::InvalidInput("levels and work_shape must be positive".into()));
        }
        if !(self.step_size > 0.0 && self.max_step >= self.step_size && self.min_step > 0.0) {
            return Err(Error::InvalidInput("step sizes must satisfy 0 < min, 0 < step <= max".into()));
        }
        if let Similarity::Local { radius: 0 } = self.similarity {
            return Err(Error::InvalidInput("local similarity radius must be >= 1".into()));
        }
        Ok(())
    }
}

/// Objective value broken into its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Terms {
    /// Similarity of the baseline and the pulled-back follow-up.
    pub sim_fwd: f64,
    /// Similarity of the follow-up and the pulled-back baseline.
    pub sim_bwd: f64,
    /// Sum of both inverse-consistency penalties.
    pub gradicon: f64,
    pub total: f64,
}

/// The registration objective for a fixed image pair on one grid.
#[derive(Debug, Clone)]
pub struct Objective {
    grid: Grid,
    baseline: Vec<f64>,
    followup: Vec<f64>,
    lambda: f64,
    similarity: Similarity,
}

impl Objective {
    pub fn new(baseline: &Volume, followup: &Volume, lambda: f64, similarity: Similarity) -> Result<Self> {
        baseline.grid().ensure_matches(followup.grid(), "objective images")?;
        for v in [baseline, followup] {
            if v.min() == v.max() {
                return Err(Error::ConstantVolume);
            }
        }
        Ok(Objective {
            grid: *baseline.grid(),
            baseline: baseline.to_f64(),
            followup: followup.to_f64(),
            lambda,
            similarity,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn check(&self, u_fwd: &DisplacementField, u_bwd: &DisplacementField) -> Result<()> {
        self.grid.ensure_matches(u_fwd.grid(), "forward field")?;
        self.grid.ensure_matches(u_bwd.grid(), "backward field")
    }

    pub fn terms(&self, u_fwd: &DisplacementField, u_bwd: &DisplacementField) -> Result<Terms> {
        self.check(u_fwd, u_bwd)?;
        Ok(self.eval(u_fwd.data(), u_bwd.data(), false).0)
    }

    /// Objective terms and the gradients with respect to both fields
    /// (per mm of displacement).
    pub fn gradient(
        &self,
        u_fwd: &DisplacementField,
        u_bwd: &DisplacementField,
    ) -> Result<(Terms, DisplacementField, DisplacementField)> {
        self.check(u_fwd, u_bwd)?;
        let (t, g) = self.eval(u_fwd.data(), u_bwd.data(), true);
        let (gf, gb) = g.expect("requested");
        Ok((
            t,
            DisplacementField::new(self.grid, gf)?,
            DisplacementField::new(self.grid, gb)?,
        ))
    }

    #[allow(clippy::type_complexity)]
    fn eval(
        &self,
        uf: &[[f64; 3]],
        ub: &[[f64; 3]],
        want_grad: bool,
    ) -> (Terms, Option<(Vec<[f64; 3]>, Vec<[f64; 3]>)>) {
        let g = &self.grid;
        let shape = g.shape;
        let (wf, dwf) = similarity::warp_with_grad(g, &self.followup, uf, want_grad);
        let (sim_fwd, gsf) = self.similarity.eval(shape, &self.baseline, &wf, want_grad);
        let (wb, dwb) = similarity::warp_with_grad(g, &self.baseline, ub, want_grad);
        let (sim_bwd, gsb) = self.similarity.eval(shape, &self.followup, &wb, want_grad);
        let (p1, g1) = gradicon::penalty(g, uf, ub, want_grad);
        let (p2, g2) = gradicon::penalty(g, ub, uf, want_grad);
        let terms = Terms {
            sim_fwd,
            sim_bwd,
            gradicon: p1 + p2,
            total: (1.0 - sim_fwd) + (1.0 - sim_bwd) + self.lambda * (p1 + p2),
        };
        if !want_grad {
            return (terms, None);
        }
        let (dwf, dwb, gsf, gsb) = (dwf.unwrap(), dwb.unwrap(), gsf.unwrap(), gsb.unwrap());
        let ((g1_ab, g1_ba), (g2_ab, g2_ba)) = (g1.unwrap(), g2.unwrap());
        let lam = self.lambda;
        let gf = crate::par::map_indices(uf.len(), |i| {
            std::array::from_fn(|d| -gsf[i] * dwf[i][d] + lam * (g1_ab[i][d] + g2_ba[i][d]))
        });
        let gb = crate::par::map_indices(ub.len(), |i| {
            std::array::from_fn(|d| -gsb[i] * dwb[i][d] + lam * (g1_ba[i][d] + g2_ab[i][d]))
        });
        (terms, Some((gf, gb)))
    }
}

/// Global zero-mean normalized cross correlation.
pub fn ncc(a: &Volume, b: &Volume) -> Result<f64> {
    a.grid().ensure_matches(b.grid(), "ncc")?;
    if a.min() == a.max() || b.min() == b.max() {
        return Err(Error::ConstantVolume);
    }
    Ok(ncc_values(&a.to_f64(), &b.to_f64()))
}

/// Total objective with global NCC.
pub fn objective(
    baseline: &Volume,
    followup: &Volume,
    u_fwd: &DisplacementField,
    u_bwd: &DisplacementField,
    lambda: f64,
) -> Result<f64> {
    Ok(Objective::new(baseline, followup, lambda, Similarity::Global)?
        .terms(u_fwd, u_bwd)?
        .total)
}

/// Summary written next to registration outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub initial_objective: f64,
    pub final_objective: f64,
    pub ncc_fwd: f64,
    pub ncc_bwd: f64,
    pub gradicon_residual: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    /// Baseline to follow-up, on the baseline grid (mm).
    pub u_fwd: DisplacementField,
    /// Follow-up to baseline, on the follow-up grid (mm).
    pub u_bwd: DisplacementField,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub ncc_fwd: f64,
    pub ncc_bwd: f64,
    pub gradicon_residual: f64,
    /// Accepted objective values per level, coarse to fine.
    pub per_level_history: Vec<Vec<f64>>,
    /// Grid the objective was evaluated on.
    pub work_grid: Grid,
    pub seconds: f64,
}

impl RegistrationResult {
    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            initial_objective: self.initial_objective,
            final_objective: self.final_objective,
            ncc_fwd: self.ncc_fwd,
            ncc_bwd: self.ncc_bwd,
            gradicon_residual: self.gradicon_residual,
            seconds: self.seconds,
        }
    }
}

/// Grid with `shape` spanning the voxel-center box of `g`.
fn spanning_grid(g: &Grid, shape: [usize; 3]) -> Result<Grid> {
    let mut sh = shape;
    let spacing = std::array::from_fn(|k| {
        let extent = (g.shape[k] - 1) as f64 * g.spacing[k];
        if g.shape[k] == 1 || sh[k] == 1 {
            sh[k] = 1;
            g.spacing[k]
        } else {
            extent / (sh[k] - 1) as f64
        }
    });
    Grid::new(sh, spacing, g.origin)
}

fn level_shape(work: [usize; 3], factor: usize) -> [usize; 3] {
    std::array::from_fn(|k| {
        if work[k] <= 1 {
            1
        } else {
            let n = ((work[k] - 1) as f64 / factor as f64).round() as usize + 1;
            n.max(2).min(work[k])
        }
    })
}

fn smoothed(grid: &Grid, v: &Volume, factor: usize) -> Result<Volume> {
    if factor <= 1 {
        return Ok(v.clone());
    }
    let sigma = std::array::from_fn(|k| 0.5 * factor as f64 * v.grid().spacing[k]);
    let b = gaussian_blur(v, &KernelSpec { sigma, truncation: 4.0 });
    resample_to_grid(&b, grid, Interp::Trilinear)
}

fn step(u: &DisplacementField, g: &[[f64; 3]], scale: f64) -> Result<DisplacementField> {
    let data = u
        .data()
        .iter()
        .zip(g)
        .map(|(a, b)| [a[0] - scale * b[0], a[1] - scale * b[1], a[2] - scale * b[2]])
        .collect();
    DisplacementField::new(*u.grid(), data)
}

fn max_norm(v: &[[f64; 3]]) -> f64 {
    v.iter()
        .map(|a| (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt())
        .fold(0.0, f64::max)
}

struct LevelOutcome {
    u_fwd: DisplacementField,
    u_bwd: DisplacementField,
    history: Vec<f64>,
}

fn optimize_level(
    obj: &Objective,
    init: (DisplacementField, DisplacementField),
    cfg: &RegistrationConfig,
    level: usize,
    iters: usize,
) -> Result<LevelOutcome> {
    let grid = *obj.grid();
    let zero = DisplacementField::zeros(grid);
    let (mut uf, mut ub) = init;
    // a poor upsampled start is replaced by the identity
    if obj.terms(&uf, &ub)?.total > obj.terms(&zero, &zero)?.total {
        uf = zero.clone();
        ub = zero;
    }
    let (mut terms, mut gf, mut gb) = obj.gradient(&uf, &ub)?;
    let mut history = vec![terms.total];
    let h = grid.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    let sigma = [cfg.grad_sigma; 3];
    let mut alpha = cfg.step_size;

    for it in 0..iters {
        let (sf, sb) = if cfg.grad_sigma > 0.0 {
            (
                blur_vec(grid.shape, gf.data(), sigma, 4.0),
                blur_vec(grid.shape, gb.data(), sigma, 4.0),
            )
        } else {
            (gf.data().to_vec(), gb.data().to_vec())
        };
        let m = max_norm(&sf).max(max_norm(&sb));
        if !m.is_finite() {
            return Err(Error::Diverged {
                level,
                iteration: it,
                reason: "non-finite gradient".into(),
            });
        }
        if m == 0.0 {
            break;
        }
        let scale = alpha * h / m;
        let tf = step(&uf, &sf, scale)?;
        let tb = step(&ub, &sb, scale)?;
        let trial = obj.terms(&tf, &tb)?;
        if !trial.total.is_finite() {
            return Err(Error::Diverged {
                level,
                iteration: it,
                reason: "non-finite objective".into(),
            });
        }
        if trial.total < terms.total {
            let rel = (terms.total - trial.total) / terms.total.abs().max(1e-12);
            uf = tf;
            ub = tb;
            (terms, gf, gb) = obj.gradient(&uf, &ub)?;
            history.push(terms.total);
            alpha = (alpha * 1.2).min(cfg.max_step);
            if rel < cfg.convergence_tol {
                break;
            }
        } else {
            alpha *= 0.5;
            if alpha < cfg.min_step {
                break;
            }
        }
    }
    Ok(LevelOutcome {
        u_fwd: uf,
        u_bwd: ub,
        history,
    })
}

/// Register `baseline` and `followup`, returning fields on their native grids.
pub fn register(baseline: &Volume, followup: &Volume, cfg: &RegistrationConfig) -> Result<RegistrationResult> {
    cfg.validate()?;
    for v in [baseline, followup] {
        if v.min() == v.max() {
            return Err(Error::ConstantVolume);
        }
    }
    let start = Instant::now();
    let work = spanning_grid(baseline.grid(), cfg.work_shape)?;
    let a = resample_to_grid(baseline, &work, Interp::Trilinear)?;
    let b = resample_to_grid(followup, &work, Interp::Trilinear)?;

    let mut history = Vec::new();
    let mut fields: Option<(DisplacementField, DisplacementField)> = None;
    for (level, (&factor, &iters)) in cfg.levels.iter().zip(&cfg.iters_per_level).enumerate() {
        let lg = spanning_grid(&work, level_shape(work.shape, factor))?;
        let la = smoothed(&lg, &a, factor)?;
        let lb = smoothed(&lg, &b, factor)?;
        if la.min() == la.max() || lb.min() == lb.max() {
            // too coarse to carry any contrast; skip this level
            history.push(Vec::new());
            continue;
        }
        let obj = Objective::new(&la, &lb, cfg.lambda, cfg.similarity)?;
        let init = match fields.take() {
            Some((f, g)) => (f.resample_to(&lg), g.resample_to(&lg)),
            None => (DisplacementField::zeros(lg), DisplacementField::zeros(lg)),
        };
        let out = optimize_level(&obj, init, cfg, level, iters)?;
        history.push(out.history);
        fields = Some((out.u_fwd, out.u_bwd));
    }

    let obj = Objective::new(&a, &b, cfg.lambda, cfg.similarity)?;
    let zero = DisplacementField::zeros(work);
    let initial = obj.terms(&zero, &zero)?;
    let (mut uf, mut ub) = match fields {
        Some((f, g)) => (f.resample_to(&work), g.resample_to(&work)),
        None => (zero.clone(), zero.clone()),
    };
    let mut fin = obj.terms(&uf, &ub)?;
    if fin.total > initial.total {
        uf = zero.clone();
        ub = zero;
        fin = initial;
    }
    let global_ncc = |x: &Volume, y: &Volume, u: &DisplacementField| -> f64 {
        let (w, _) = similarity::warp_with_grad(&work, &y.to_f64(), u.data(), false);
        ncc_values(&x.to_f64(), &w)
    };
    let ncc_fwd = global_ncc(&a, &b, &uf);
    let ncc_bwd = global_ncc(&b, &a, &ub);
    Ok(RegistrationResult {
        u_fwd: uf.resample_to(baseline.grid()),
        u_bwd: ub.resample_to(followup.grid()),
        initial_objective: initial.total,
        final_objective: fin.total,
        ncc_fwd,
        ncc_bwd,
        gradicon_residual: fin.gradicon,
        per_level_history: history,
        work_grid: work,
        seconds: start.elapsed().as_secs_f64(),
    })
}
