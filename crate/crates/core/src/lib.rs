//! Volumetric lesion tracking toolkit.
//!
//! The crate is organised around a handful of grid-aligned types
//! ([`Volume`], [`InstanceMask`], [`BinaryMask`], [`DisplacementField`]) and
//! the operations built on them:
//!
//! * [`volume`] and [`nifti`]: grid types, NIfTI-1 I/O, resampling, intensity
//!   normalization and ROI cropping.
//! * [`field`]: Gaussian smoothing, gradients, warping, map composition,
//!   Jacobians, connected components, distance transforms.
//! * [`synth`]: synthetic follow-up generation (lesion growth/shrinkage plus
//!   image-level augmentation) and phantom construction.
//! * [`prompt`]: point/box/mask prompts, their simulation, rasterization and
//!   propagation through displacement fields.
//! * [`registration`]: symmetric deformable registration minimizing
//!   `(1 - NCC) + lambda * GradICON` directly over two displacement fields.
//! * [`tracking`]: the autoregressive register → propagate → crop → segment
//!   loop with a pluggable [`tracking::Segmenter`].
//! * [`metrics`]: Dice, NSD, CPM@25, Dice@25, MED, total Dice and
//!   patient-level aggregation.
//!
//! Per-voxel kernels run on rayon when the `parallel` feature (default) is
//! enabled and fall back to plain loops otherwise. Results are identical in
//! both builds: reductions use fixed chunking.

pub mod error;
pub mod field;
pub mod grid;
pub mod metrics;
pub mod nifti;
pub mod par;
pub mod prompt;
pub mod registration;
pub mod rng;
pub mod synth;
pub mod tracking;
pub mod volume;

pub use error::{Error, Result};
pub use field::DisplacementField;
pub use grid::{Box3, Grid, Point3};
pub use volume::{BinaryMask, InstanceMask, Volume};
