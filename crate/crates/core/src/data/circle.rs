//! Points on the unit circle with a target that is a single sine period on
//! the upper half and nine times faster on the lower half.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::model::{Batch, Targets};

use super::Region;

#[derive(Clone, Debug, PartialEq)]
pub struct CircleDataset {
    /// Radians, ascending, `θ_i = 2πi/n`.
    pub angles: Vec<f64>,
    pub targets: Vec<f64>,
    pub regions: Vec<Region>,
}

/// `sin θ` below `π`, `sin(π + 9(θ - π))` from `π` on.
pub fn circle_target(theta: f64) -> f64 {
    if theta < PI {
        theta.sin()
    } else {
        (PI + 9.0 * (theta - PI)).sin()
    }
}

pub fn gen_circle(n: usize) -> Result<CircleDataset> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("circle dataset needs n >= 2, got {n}")));
    }
    let angles: Vec<f64> = (0..n)
        .map(|i| if 2 * i == n { PI } else { TAU * i as f64 / n as f64 })
        .collect();
    let targets = angles.iter().map(|&t| circle_target(t)).collect();
    let regions = angles
        .iter()
        .map(|&t| if t < PI { Region::Simple } else { Region::Complex })
        .collect();
    Ok(CircleDataset {
        angles,
        targets,
        regions,
    })
}

impl CircleDataset {
    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// `n x 2` matrix of `(cos θ, sin θ)`.
    pub fn inputs(&self) -> Matrix {
        let data = self.angles.iter().flat_map(|t| [t.cos(), t.sin()]).collect();
        Matrix::from_vec(self.len(), 2, data).expect("two columns per angle")
    }

    pub fn batch(&self) -> Batch {
        let y = Matrix::from_vec(self.len(), 1, self.targets.clone()).expect("one target per point");
        Batch::new(self.inputs(), Targets::Values(y)).expect("matching lengths")
    }

    /// CSV with header `angle,x1,x2,y,region`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("angle,x1,x2,y,region\n");
        for ((t, y), r) in self.angles.iter().zip(&self.targets).zip(&self.regions) {
            let _ = writeln!(s, "{:.16e},{:.16e},{:.16e},{:.16e},{}", t, t.cos(), t.sin(), y, r);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
