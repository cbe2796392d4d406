//! Finest partitions of empirical σ-fields.
//!
//! Three representations share the [`Partition`] lookup interface:
//!
//! * [`GridPartition`]: axis-aligned grid from per-coordinate split values;
//!   cells are exact boxes.
//! * [`CornerPartition`]: the atoms of σ(A_{x_1}, …, A_{x_n}) for corner
//!   boxes, computed exactly as unions of boxes of the grid through the
//!   sample coordinates.
//! * [`SignaturePartition`]: atoms of the σ-field generated by arbitrary sets,
//!   represented by membership signatures of a reference Monte Carlo sample.

pub(crate) mod corner;
mod grid;
mod signature;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, dominated, BoxRegion};

pub use corner::CornerPartition;
pub use grid::{AxisTables, GridPartition, EXACT_CELL_LIMIT};
pub use signature::{build_ball_partition, build_corner_partition, sample_balls, SignaturePartition, RETAINED_POINTS};

/// A set generating part of an empirical σ-field. All sets are closed on the
/// "≤" side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Generator {
    /// `{y in the domain : y ≤ x coordinate-wise}`.
    CornerBox(Vec<f64>),
    /// Closed Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// `{y : y_axis ≤ value}`.
    Threshold { axis: usize, value: f64 },
}

impl Generator {
    pub fn contains(&self, y: &[f64]) -> bool {
        match self {
            Generator::CornerBox(x) => dominated(y, x),
            Generator::Ball { center, radius } => distance(y, center) <= *radius,
            Generator::Threshold { axis, value } => y[*axis] <= *value,
        }
    }

    pub fn validate(&self, domain: &BoxRegion) -> Result<()> {
        let d = domain.dim();
        match self {
            Generator::CornerBox(x) if x.len() != d || !domain.contains(x) => {
                Err(Error::config(format!("corner point {x:?} outside the domain")))
            }
            Generator::Ball { center, .. } if center.len() != d => {
                Err(Error::config(format!("ball center {center:?} is not {d}-dimensional")))
            }
            Generator::Ball { radius, .. } if !(*radius > 0.0) || !radius.is_finite() => {
                Err(Error::config(format!("ball radius {radius} must be positive")))
            }
            Generator::Threshold { axis, .. } if *axis >= d => {
                Err(Error::config(format!("threshold axis {axis} out of range for dimension {d}")))
            }
            _ => Ok(()),
        }
    }

    /// Corner boxes and thresholds intersect to boxes.
    pub fn is_box_like(&self) -> bool {
        !matches!(self, Generator::Ball { .. })
    }
}

/// Summary of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    /// Probability mass (exact or Monte Carlo frequency).
    pub mass: f64,
    /// Diameter (exact, or a lower estimate from retained points).
    pub diameter: f64,
    /// Number of reference points in the cell (0 for exact partitions).
    pub sample_count: usize,
    pub representative: Vec<f64>,
}

/// Cell lookup shared by all partition representations.
pub trait Partition: Sync {
    fn dim(&self) -> usize;

    /// Number of cells; saturates for grids too large to enumerate.
    fn num_cells(&self) -> usize;

    /// Index of the cell containing `x`, or `None` if `x` falls in a cell
    /// of zero (estimated) mass that the partition does not store.
    fn locate(&self, x: &[f64]) -> Option<usize>;
}

/// Σ mass · diameter over a list of cell summaries.
pub fn diameter_bound_of(cells: &[CellStats]) -> f64 {
    cells.iter().map(|c| c.mass * c.diameter).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_membership() {
        let a = Generator::CornerBox(vec![0.5, 0.5]);
        let b = Generator::CornerBox(vec![0.2, 0.9]);
        let p = [0.3, 0.7];
        assert!(!a.contains(&p));
        assert!(!b.contains(&p));
        assert!(a.contains(&[0.5, 0.5]));
        let ball = Generator::Ball { center: vec![0.5, 0.5], radius: 0.25 };
        assert!(ball.contains(&[0.5, 0.75]));
        assert!(!ball.contains(&[0.5, 0.76]));
        assert!(Generator::Threshold { axis: 1, value: 0.4 }.contains(&[0.9, 0.4]));
    }

    #[test]
    fn generator_validation() {
        let dom = BoxRegion::unit(2);
        assert!(Generator::CornerBox(vec![1.2, 0.1]).validate(&dom).is_err());
        assert!(Generator::Ball { center: vec![0.5, 0.5], radius: 0.0 }.validate(&dom).is_err());
        assert!(Generator::Threshold { axis: 2, value: 0.5 }.validate(&dom).is_err());
        assert!(Generator::Threshold { axis: 1, value: 0.5 }.validate(&dom).is_ok());
    }
}
