use std::path::PathBuf;

use serde::Serialize;

use lesiontrack::nifti::{load_volume, save_field};
use lesiontrack::registration::{register, Diagnostics, RegistrationConfig, Similarity};

use super::{ensure_dir, parse_similarity, parse_triple, require_file, write_json};
use crate::Context;

/// Registration overrides shared by `register` and `track`.
#[derive(Debug, Default, clap::Args)]
pub struct RegFlags {
    /// Working grid shape: `N` or `X,Y,Z`.
    #[arg(long, value_parser = parse_triple::<usize>)]
    pub work_shape: Option<[usize; 3]>,
    /// Inverse-consistency weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// `global` or `local:<radius>`.
    #[arg(long, value_parser = parse_similarity)]
    pub similarity: Option<Similarity>,
    /// Downsampling factors, coarse to fine, e.g. `4,2,1`.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<usize>>,
    /// Iterations per level, e.g. `100,100,50`.
    #[arg(long, value_delimiter = ',')]
    pub iters: Option<Vec<usize>>,
}

impl RegFlags {
    pub fn apply(&self, mut c: RegistrationConfig) -> RegistrationConfig {
        if let Some(v) = self.work_shape {
            c.work_shape = v;
        }
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if let Some(v) = self.similarity {
            c.similarity = v;
        }
        if let Some(v) = &self.levels {
            c.levels = v.clone();
        }
        if let Some(v) = &self.iters {
            c.iters_per_level = v.clone();
        }
        c
    }
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Earlier scan (NIfTI); `u_fwd` lives on its grid.
    #[arg(long)]
    pub baseline: PathBuf,
    /// Later scan (NIfTI); `u_bwd` lives on its grid.
    #[arg(long)]
    pub followup: PathBuf,
    #[command(flatten)]
    pub reg: RegFlags,
}

/// Contents of `diagnostics.json`.
#[derive(Debug, Serialize)]
pub struct DiagnosticsFile {
    pub status: &'static str,
    #[serde(flatten)]
    pub diagnostics: Option<Diagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: RegistrationConfig,
}

pub fn run(ctx: &Context, a: Args) -> anyhow::Result<()> {
    require_file(&a.baseline, "baseline")?;
    require_file(&a.followup, "followup")?;
    let cfg = a.reg.apply(ctx.cfg.registration.clone());
    cfg.validate()?;
    let b = load_volume(&a.baseline)?;
    let f = load_volume(&a.followup)?;
    ensure_dir(&ctx.out)?;
    let diag_path = ctx.out.join("diagnostics.json");
    match register(&b, &f, &cfg) {
        Ok(r) => {
            save_field(&r.u_fwd, ctx.out.join("u_fwd.json"))?;
            save_field(&r.u_bwd, ctx.out.join("u_bwd.json"))?;
            write_json(
                &diag_path,
                &DiagnosticsFile {
                    status: "ok",
                    diagnostics: Some(r.diagnostics()),
                    error: None,
                    config: cfg,
                },
            )
        }
        Err(e) => {
            // Diagnostics are written on every failure so a diverged run can
            // be inspected; the error still decides the exit code.
            write_json(
                &diag_path,
                &DiagnosticsFile {
                    status: if matches!(e, lesiontrack::Error::Diverged { .. }) { "diverged" } else { "failed" },
                    diagnostics: None,
                    error: Some(e.to_string()),
                    config: cfg,
                },
            )?;
            Err(e.into())
        }
    }
}
