//! Neural networks viewed as mixtures of path experts.
//!
//! A network with `L - 1` hidden layers of width `m` is a sum over its
//! `m^(L-1)` input-to-output paths, each path contributing its value only
//! where every gate along it is open. This crate implements four such
//! networks (ReLU, DLGN, DLGN-PWC and the deep linear network), an
//! exhaustive path oracle, the overlap kernel counting shared active paths,
//! the empirical tangent kernel, and the circle and Fashion-MNIST experiments
//! built on them.

pub mod data;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod math;
pub mod model;
pub mod paths;

pub use data::Region;
pub use error::{Error, Result};
pub use kernels::{KernelKind, KernelMatrix};
pub use math::{Matrix, Rng};
pub use model::{ArchKind, Architecture, Freeze, GateMode, ModelParams};
