//! Points and axis-aligned boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of points in ℝ^d stored row-major in one buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim, coords: Vec::new() }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim, coords: Vec::with_capacity(dim * n) }
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(Error::config(format!(
                "{} coordinates do not form points of dimension {dim}",
                coords.len()
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut ps = Self::with_capacity(dim, rows.len());
        for r in rows {
            if r.len() != dim {
                return Err(Error::config(format!("point {r:?} is not {dim}-dimensional")));
            }
            ps.coords.extend_from_slice(r);
        }
        Ok(ps)
    }

    pub fn from_scalars(values: &[f64]) -> Self {
        Self { dim: 1, coords: values.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.dim);
        self.coords.extend_from_slice(p);
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// First `n` points (all of them if fewer).
    pub fn prefix(&self, n: usize) -> PointSet {
        let n = n.min(self.len());
        Self { dim: self.dim, coords: self.coords[..n * self.dim].to_vec() }
    }

    /// Values of coordinate `axis` across all points.
    pub fn column(&self, axis: usize) -> Vec<f64> {
        self.iter().map(|p| p[axis]).collect()
    }
}

/// Closed axis-aligned box `[lo_1, hi_1] × … × [lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::config("box bounds must have equal, positive length"));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::config(format!("invalid box bounds {lo:?} / {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn unit(dim: usize) -> Self {
        Self { lo: vec![0.0; dim], hi: vec![1.0; dim] }
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self { lo: vec![lo; dim], hi: vec![hi; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Intersection, or `None` when it has an empty coordinate range.
    pub fn intersect(&self, other: &BoxRegion) -> Option<BoxRegion> {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            None
        } else {
            Some(BoxRegion { lo, hi })
        }
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `a ≤ b` coordinate-wise.
pub fn dominated(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_set_layout() {
        let ps = PointSet::from_rows(2, &[vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(ps.point(1), &[0.3, 0.4]);
        assert_eq!(ps.column(0), vec![0.1, 0.3]);
        assert_eq!(ps.prefix(1).len(), 1);
        assert!(PointSet::from_flat(2, vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn box_geometry() {
        let b = BoxRegion::unit(2);
        assert!((b.diameter() - 2f64.sqrt()).abs() < 1e-15);
        assert!(b.contains(&[1.0, 0.0]));
        assert!(!b.contains(&[1.1, 0.0]));
        let c = BoxRegion::new(vec![0.5, 0.5], vec![2.0, 2.0]).unwrap();
        let i = b.intersect(&c).unwrap();
        assert_eq!(i.lo, vec![0.5, 0.5]);
        assert_eq!(i.hi, vec![1.0, 1.0]);
        assert!(BoxRegion::new(vec![1.0], vec![0.0]).is_err());
    }
}
