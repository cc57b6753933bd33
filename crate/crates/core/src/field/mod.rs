//! Scalar and vector field kernels.

mod displacement;
pub mod edt;
pub mod gaussian;
pub mod interp;
pub mod label;
pub mod ops;

pub use displacement::DisplacementField;
pub use edt::distance_transform;
pub use gaussian::{gaussian_blur, KernelSpec};
pub use label::{binary_centroid, centroid, connected_components, Connectivity};
pub use ops::{compose, gradient, jacobian, warp, warp_binary, warp_mask, warp_mask_onto, warp_onto};
