use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{BoxRegion, PointSet};
use crate::measure::MeasureSpec;
use crate::rng::SeededStream;
use crate::stats::{mean_se, Estimate};

use super::Partition;

/// Grids with at most this many cells are evaluated cell by cell; larger
/// ones fall back to Monte Carlo where a whole-grid sum is needed.
pub const EXACT_CELL_LIMIT: usize = 1 << 22;

/// Axis-aligned grid partition of a box.
///
/// Along axis `i` with sorted splits `s_0 < … < s_{k-1}`, cell `j` is
/// `(s_{j-1}, s_j]` (the first cell includes the domain's lower edge), so a
/// point exactly on a split belongs to the lower cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPartition {
    domain: BoxRegion,
    splits: Vec<Vec<f64>>,
}

impl GridPartition {
    pub fn trivial(domain: BoxRegion) -> Self {
        let d = domain.dim();
        Self { domain, splits: vec![Vec::new(); d] }
    }

    /// Sorts and deduplicates the splits and drops those not strictly
    /// inside the domain (they would create empty cells).
    pub fn from_splits(domain: BoxRegion, splits: Vec<Vec<f64>>) -> Result<Self> {
        if splits.len() != domain.dim() {
            return Err(Error::config(format!(
                "{} split lists for a {}-dimensional domain",
                splits.len(),
                domain.dim()
            )));
        }
        let splits = splits
            .into_iter()
            .enumerate()
            .map(|(i, mut s)| {
                s.retain(|v| *v > domain.lo[i] && *v < domain.hi[i]);
                s.sort_by(f64::total_cmp);
                s.dedup();
                s
            })
            .collect();
        Ok(Self { domain, splits })
    }

    /// The symmetric grid: every coordinate of every point becomes a split.
    pub fn build_symmetric(points: &PointSet, domain: &BoxRegion) -> Result<Self> {
        if points.dim() != domain.dim() {
            return Err(Error::config(format!(
                "{}-dimensional points for a {}-dimensional domain",
                points.dim(),
                domain.dim()
            )));
        }
        let splits = (0..domain.dim()).map(|i| points.column(i)).collect();
        Self::from_splits(domain.clone(), splits)
    }

    pub fn domain(&self) -> &BoxRegion {
        &self.domain
    }

    pub fn splits(&self) -> &[Vec<f64>] {
        &self.splits
    }

    pub fn cells_per_axis(&self) -> Vec<usize> {
        self.splits.iter().map(|s| s.len() + 1).collect()
    }

    /// Total number of cells, saturating at `u128::MAX`.
    pub fn cell_count(&self) -> u128 {
        self.splits.iter().fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128 + 1))
    }

    pub fn is_enumerable(&self) -> bool {
        self.cell_count() <= EXACT_CELL_LIMIT as u128
    }

    /// Interval index of `v` along `axis`: the number of splits below `v`.
    pub fn axis_cell(&self, axis: usize, v: f64) -> usize {
        self.splits[axis].partition_point(|s| *s < v)
    }

    pub fn cell_of(&self, x: &[f64]) -> Vec<usize> {
        (0..self.dim()).map(|i| self.axis_cell(i, x[i])).collect()
    }

    /// Mixed-radix key of the cell containing `x`; distinct cells get
    /// distinct keys whenever the cell count fits in 128 bits.
    pub fn cell_key(&self, x: &[f64]) -> u128 {
        let mut key = 0u128;
        for i in (0..self.dim()).rev() {
            let radix = self.splits[i].len() as u128 + 1;
            key = key.wrapping_mul(radix).wrapping_add(self.axis_cell(i, x[i]) as u128);
        }
        key
    }

    /// Row-major linear index with axis 0 varying fastest.
    pub fn linear_index(&self, idx: &[usize]) -> usize {
        let mut lin = 0usize;
        for i in (0..self.dim()).rev() {
            lin = lin.wrapping_mul(self.splits[i].len() + 1).wrapping_add(idx[i]);
        }
        lin
    }

    pub fn unravel(&self, mut lin: usize) -> Vec<usize> {
        self.splits
            .iter()
            .map(|s| {
                let r = s.len() + 1;
                let k = lin % r;
                lin /= r;
                k
            })
            .collect()
    }

    pub fn axis_interval(&self, axis: usize, k: usize) -> (f64, f64) {
        let s = &self.splits[axis];
        let lo = if k == 0 { self.domain.lo[axis] } else { s[k - 1] };
        let hi = if k == s.len() { self.domain.hi[axis] } else { s[k] };
        (lo, hi)
    }

    pub fn cell_box(&self, idx: &[usize]) -> BoxRegion {
        let (lo, hi) = (0..self.dim()).map(|i| self.axis_interval(i, idx[i])).unzip();
        BoxRegion { lo, hi }
    }

    /// Upper corner of a cell: per axis the smallest split at or above the
    /// cell's upper edge, or the domain maximum.
    pub fn upper_corner(&self, idx: &[usize]) -> Vec<f64> {
        (0..self.dim()).map(|i| self.axis_interval(i, idx[i]).1).collect()
    }

    /// Per-axis interval masses and first moments under a product measure.
    pub fn tables(&self, spec: &MeasureSpec) -> Result<AxisTables> {
        AxisTables::new(self, spec)
    }

    /// Exact cell masses in linear-index order.
    pub fn cell_masses(&self, spec: &MeasureSpec) -> Result<Vec<f64>> {
        self.require_enumerable()?;
        let t = self.tables(spec)?;
        Ok((0..self.num_cells()).map(|lin| t.cell_mass(&self.unravel(lin))).collect())
    }

    /// Σ μ(A)·diam(A) over all cells, exactly (requires an enumerable grid
    /// and a product measure).
    pub fn diameter_bound(&self, spec: &MeasureSpec) -> Result<f64> {
        self.require_enumerable()?;
        let t = self.tables(spec)?;
        let widths: Vec<Vec<f64>> = (0..self.dim())
            .map(|i| (0..=self.splits[i].len()).map(|k| {
                let (a, b) = self.axis_interval(i, k);
                (b - a) * (b - a)
            }).collect())
            .collect();
        let mut total = 0.0;
        accumulate_cells(&t.mass, &widths, self.dim(), 1.0, 0.0, &mut total);
        Ok(total)
    }

    /// Monte Carlo estimate of the diameter bound from `m` draws of `spec`:
    /// the mean over draws of the diameter of the containing cell.
    pub fn diameter_bound_mc(&self, spec: &MeasureSpec, m: usize, stream: SeededStream) -> Result<Estimate> {
        let pts = spec.sample(m, stream)?;
        let diams: Vec<f64> = pts.iter().map(|x| self.cell_box(&self.cell_of(x)).diameter()).collect();
        Ok(mean_se(&diams))
    }

    /// Writes one row per cell: `cell,mass,diameter`, with the cell given by
    /// its per-axis interval indices joined by `:`.
    pub fn write_csv<W: Write>(&self, out: W, spec: &MeasureSpec) -> Result<()> {
        self.require_enumerable()?;
        let t = self.tables(spec)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell", "mass", "diameter"])?;
        for lin in 0..self.num_cells() {
            let idx = self.unravel(lin);
            let label: Vec<String> = idx.iter().map(|k| k.to_string()).collect();
            w.write_record([
                label.join(":"),
                t.cell_mass(&idx).to_string(),
                self.cell_box(&idx).diameter().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    fn require_enumerable(&self) -> Result<()> {
        if !self.is_enumerable() {
            return Err(Error::Unsupported(format!(
                "grid with {} cells is too large to enumerate",
                self.cell_count()
            )));
        }
        Ok(())
    }
}

fn accumulate_cells(mass: &[Vec<f64>], width2: &[Vec<f64>], axis: usize, m: f64, w2: f64, total: &mut f64) {
    if axis == 0 {
        *total += m * w2.sqrt();
        return;
    }
    let a = axis - 1;
    for (pm, pw) in mass[a].iter().zip(&width2[a]) {
        if *pm > 0.0 {
            accumulate_cells(mass, width2, a, m * pm, w2 + pw, total);
        }
    }
}

impl Partition for GridPartition {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn num_cells(&self) -> usize {
        self.cell_count().min(usize::MAX as u128) as usize
    }

    fn locate(&self, x: &[f64]) -> Option<usize> {
        Some(self.linear_index(&self.cell_of(x)))
    }
}

/// Interval masses and first moments along each axis of a grid, under a
/// product measure.
#[derive(Debug, Clone)]
pub struct AxisTables {
    /// `mass[i][k]`: marginal mass of interval `k` on axis `i`.
    pub mass: Vec<Vec<f64>>,
    /// `first[i][k]`: ∫ x_i over interval `k` on axis `i`.
    pub first: Vec<Vec<f64>>,
    bounds: Vec<Vec<(f64, f64)>>,
    geometric: Vec<Vec<(f64, f64)>>,
}

impl AxisTables {
    fn new(grid: &GridPartition, spec: &MeasureSpec) -> Result<Self> {
        if !spec.is_product() && spec.dim() > 1 {
            return Err(Error::Unsupported(format!("exact grid tables need a product measure, got {}", spec.kind_name())));
        }
        if spec.dim() != grid.dim() {
            return Err(Error::config(format!(
                "{}-dimensional measure for a {}-dimensional grid",
                spec.dim(),
                grid.dim()
            )));
        }
        let d = grid.dim();
        let mut mass = Vec::with_capacity(d);
        let mut first = Vec::with_capacity(d);
        let mut bounds = Vec::with_capacity(d);
        let mut geometric = Vec::with_capacity(d);
        for i in 0..d {
            let cells = grid.splits[i].len() + 1;
            let mut mi = Vec::with_capacity(cells);
            let mut fi = Vec::with_capacity(cells);
            let mut bi = Vec::with_capacity(cells);
            for k in 0..cells {
                let (a, b) = measure_bounds(grid, i, k);
                let (m, f) = spec.axis_moments(i, a, b)?;
                mi.push(m);
                fi.push(f);
                bi.push((a, b));
            }
            mass.push(mi);
            first.push(fi);
            bounds.push(bi);
            geometric.push((0..cells).map(|k| grid.axis_interval(i, k)).collect());
        }
        Ok(Self { mass, first, bounds, geometric })
    }

    pub fn cell_mass(&self, idx: &[usize]) -> f64 {
        idx.iter().enumerate().map(|(i, k)| self.mass[i][*k]).product()
    }

    /// E[x_axis | interval k], or the interval midpoint if it has no mass.
    pub fn axis_mean(&self, axis: usize, k: usize) -> f64 {
        let m = self.mass[axis][k];
        if m > 0.0 {
            self.first[axis][k] / m
        } else {
            let (a, b) = self.geometric[axis][k];
            0.5 * (a + b)
        }
    }

    /// Interval `(a, b]` used for mass computations; the outermost
    /// intervals extend to ±∞ so atoms on the domain boundary are counted.
    pub fn measure_interval(&self, axis: usize, k: usize) -> (f64, f64) {
        self.bounds[axis][k]
    }
}

fn measure_bounds(grid: &GridPartition, axis: usize, k: usize) -> (f64, f64) {
    let (mut a, mut b) = grid.axis_interval(axis, k);
    if k == 0 {
        a = f64::NEG_INFINITY;
    }
    if k == grid.splits[axis].len() {
        b = f64::INFINITY;
    }
    (a, b)
}
