//! Datasets: the circle regression task, IDX image files, k-means, and the
//! cluster-based relabeling of Fashion-MNIST.

pub mod circle;
pub mod fmnist;
pub mod idx;
pub mod kmeans;

use std::fmt;

use serde::Serialize;

/// Which part of the input space a point belongs to: where the target
/// varies slowly (`Simple`) or quickly (`Complex`). On the circle these are
/// the upper (low-frequency) and lower (high-frequency) halves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Simple,
    Complex,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Simple => "simple",
            Region::Complex => "complex",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
