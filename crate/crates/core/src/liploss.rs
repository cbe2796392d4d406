//! Conditional-expectation projections onto partition σ-fields, their L¹
//! loss against Lipschitz test functions, and loss-rate experiments for the
//! corner-box and symmetric-grid schemes.
//!
//! Losses are exact wherever a closed form exists (coordinate projections
//! on grid and corner partitions under product measures, 1D grids by
//! quadrature) and Monte Carlo otherwise, always with exact or quadrature
//! cell values.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::{distance, BoxRegion, PointSet};
use crate::measure::{MeasureKind, MeasureSpec};
use crate::partition::{
    corner, AxisTables, CornerPartition, Generator, GridPartition, Partition, SignaturePartition, EXACT_CELL_LIMIT,
};
use crate::quad::{self, GaussOrder};
use crate::resolution::PartitionRef;
use crate::rng::{SeededStream, StreamRng};
use crate::stats::{fit_log_log, mean_se, Estimate, LogLogFit};

/// A test function with a declared Lipschitz constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LipschitzWitness {
    Constant(f64),
    /// `x ↦ x_i`.
    CoordinateProjection(usize),
    /// `x ↦ ⟨direction, x⟩ + offset`.
    Linear { direction: Vec<f64>, offset: f64 },
    /// `x ↦ |x − p|`.
    DistanceToPoint(Vec<f64>),
    /// Piecewise-linear interpolation of a 1D table, constant outside it.
    Table { knots: Vec<f64>, values: Vec<f64> },
}

impl LipschitzWitness {
    /// Linear witness along a random unit direction through the origin.
    pub fn random_linear(dim: usize, rng: &mut StreamRng) -> Self {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return LipschitzWitness::Linear { direction: v.iter().map(|x| x / norm).collect(), offset: 0.0 };
            }
        }
    }

    pub fn table(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() || knots.is_empty() {
            return Err(Error::config("table witness needs equally many knots and values"));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("table knots must be strictly increasing"));
        }
        Ok(LipschitzWitness::Table { knots, values })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            LipschitzWitness::Constant(c) => *c,
            LipschitzWitness::CoordinateProjection(i) => x[*i],
            LipschitzWitness::Linear { direction, offset } => {
                direction.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + offset
            }
            LipschitzWitness::DistanceToPoint(p) => distance(x, p),
            LipschitzWitness::Table { knots, values } => {
                let t = x[0];
                let k = knots.partition_point(|v| *v <= t);
                if k == 0 {
                    values[0]
                } else if k == knots.len() {
                    values[k - 1]
                } else {
                    let w = (t - knots[k - 1]) / (knots[k] - knots[k - 1]);
                    values[k - 1] + w * (values[k] - values[k - 1])
                }
            }
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            LipschitzWitness::Constant(_) => 0.0,
            LipschitzWitness::CoordinateProjection(_) | LipschitzWitness::DistanceToPoint(_) => 1.0,
            LipschitzWitness::Linear { direction, .. } => direction.iter().map(|a| a * a).sum::<f64>().sqrt(),
            LipschitzWitness::Table { knots, values } => knots
                .windows(2)
                .zip(values.windows(2))
                .map(|(k, v)| ((v[1] - v[0]) / (k[1] - k[0])).abs())
                .fold(0.0, f64::max),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            LipschitzWitness::Constant(_) => true,
            LipschitzWitness::CoordinateProjection(i) => *i < dim,
            LipschitzWitness::Linear { direction, .. } => direction.len() == dim,
            LipschitzWitness::DistanceToPoint(p) => p.len() == dim,
            LipschitzWitness::Table { .. } => dim == 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("witness {self} does not fit dimension {dim}")))
        }
    }

    /// Coefficients and offset when the witness is affine.
    fn affine(&self, dim: usize) -> Option<(Vec<f64>, f64)> {
        match self {
            LipschitzWitness::Constant(c) => Some((vec![0.0; dim], *c)),
            LipschitzWitness::CoordinateProjection(i) => {
                let mut a = vec![0.0; dim];
                a[*i] = 1.0;
                Some((a, 0.0))
            }
            LipschitzWitness::Linear { direction, offset } => Some((direction.clone(), *offset)),
            _ => None,
        }
    }
}

impl fmt::Display for LipschitzWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LipschitzWitness::Constant(c) => write!(f, "constant({c})"),
            LipschitzWitness::CoordinateProjection(i) => write!(f, "coordinate({i})"),
            LipschitzWitness::Linear { direction, .. } => write!(f, "linear({direction:?})"),
            LipschitzWitness::DistanceToPoint(p) => write!(f, "distance({p:?})"),
            LipschitzWitness::Table { knots, .. } => write!(f, "table({} knots)", knots.len()),
        }
    }
}

/// Coordinate projections, 8 random unit-direction linear functions and
/// the distance to a random point of `domain`.
pub fn witness_family(domain: &BoxRegion, stream: SeededStream) -> Vec<LipschitzWitness> {
    let d = domain.dim();
    let mut rng = stream.rng();
    let mut out: Vec<LipschitzWitness> = (0..d).map(LipschitzWitness::CoordinateProjection).collect();
    for _ in 0..8 {
        out.push(LipschitzWitness::random_linear(d, &mut rng));
    }
    let p = (0..d).map(|i| domain.lo[i] + rng.random::<f64>() * domain.width(i)).collect();
    out.push(LipschitzWitness::DistanceToPoint(p));
    out
}

/// Largest observed ratio |f(x) − f(y)| / |x − y| over `pairs` random pairs
/// in `domain`.
pub fn empirical_lipschitz(f: &LipschitzWitness, domain: &BoxRegion, pairs: usize, stream: SeededStream) -> f64 {
    let spec = MeasureSpec::uniform_box(domain.clone()).expect("valid domain");
    let pts = spec.sample(2 * pairs, stream).expect("uniform sampling");
    (0..pairs)
        .map(|k| {
            let (x, y) = (pts.point(2 * k), pts.point(2 * k + 1));
            let dxy = distance(x, y);
            if dxy > 0.0 {
                (f.eval(x) - f.eval(y)).abs() / dxy
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Per-cell conditional means of a witness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseConstant {
    pub values: Vec<f64>,
}

/// E[f | cell] for every cell. Grid and corner partitions under product
/// measures use exact moments (affine f) or Gauss–Legendre quadrature;
/// signature partitions average over their reference points. Zero-mass
/// cells take the value of the positive-mass cell with the nearest
/// representative.
pub fn project(partition: PartitionRef<'_>, f: &LipschitzWitness, spec: &MeasureSpec) -> Result<PiecewiseConstant> {
    f.validate(spec.dim())?;
    let values = match partition {
        PartitionRef::Grid(g) => grid_values(g, f, spec)?,
        PartitionRef::Corner(cp) => corner_values(cp, f, spec)?,
        PartitionRef::Signature(sp) => sp.cell_averages(|y| f.eval(y)),
    };
    Ok(PiecewiseConstant { values })
}

fn fill_zero_mass(values: &mut [f64], mass: &[f64], reps: &[Vec<f64>]) {
    let positive: Vec<usize> = (0..mass.len()).filter(|c| mass[*c] > 0.0).collect();
    for c in 0..mass.len() {
        if mass[c] > 0.0 {
            continue;
        }
        if let Some(&best) = positive.iter().min_by(|a, b| {
            distance(&reps[c], &reps[**a]).total_cmp(&distance(&reps[c], &reps[**b]))
        }) {
            values[c] = values[best];
        }
    }
}

fn grid_values(g: &GridPartition, f: &LipschitzWitness, spec: &MeasureSpec) -> Result<Vec<f64>> {
    if !g.is_enumerable() {
        return Err(Error::Unsupported(format!("grid with {} cells is too large to project", g.cell_count())));
    }
    let t = g.tables(spec)?;
    let affine = f.affine(g.dim());
    let n = g.num_cells();
    let mut values = Vec::with_capacity(n);
    let mut mass = Vec::with_capacity(n);
    for lin in 0..n {
        let idx = g.unravel(lin);
        let m = t.cell_mass(&idx);
        mass.push(m);
        values.push(match &affine {
            Some((a, b)) => affine_cell_value(&t, &idx, a, *b),
            None if m > 0.0 => {
                let (mm, integral) = box_integral(spec, &measure_box(&t, &idx), f, GaussOrder::Five)?;
                integral / mm
            }
            None => 0.0,
        });
    }
    if affine.is_none() && mass.iter().any(|m| *m == 0.0) {
        let reps: Vec<Vec<f64>> = (0..n).map(|lin| g.cell_box(&g.unravel(lin)).center()).collect();
        fill_zero_mass(&mut values, &mass, &reps);
    }
    Ok(values)
}

fn affine_cell_value(t: &AxisTables, idx: &[usize], a: &[f64], b: f64) -> f64 {
    a.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(i, c)| c * t.axis_mean(i, idx[i])).sum::<f64>() + b
}

fn measure_box(t: &AxisTables, idx: &[usize]) -> BoxRegion {
    let (lo, hi) = idx.iter().enumerate().map(|(i, k)| t.measure_interval(i, *k)).unzip();
    BoxRegion { lo, hi }
}

fn corner_values(cp: &CornerPartition, f: &LipschitzWitness, spec: &MeasureSpec) -> Result<Vec<f64>> {
    let d = cp.dim();
    let atoms = cp.atoms();
    let mut values: Vec<f64> = match f.affine(d) {
        Some((a, b)) => atoms
            .iter()
            .map(|atom| {
                if atom.mass > 0.0 {
                    a.iter().zip(&atom.first).map(|(c, m)| c * m).sum::<f64>() / atom.mass + b
                } else {
                    b + a.iter().zip(&atom.upper).map(|(c, u)| c * u).sum::<f64>()
                }
            })
            .collect(),
        None => {
            let t = cp.tables();
            let shape = cp.grid().cells_per_axis();
            let mut sums = vec![0.0; atoms.len()];
            let mut idx = vec![0usize; d];
            for lin in 0..cp.grid().num_cells() {
                if t.cell_mass(&idx) > 0.0 {
                    let (_, integral) = box_integral(spec, &measure_box(t, &idx), f, GaussOrder::Three)?;
                    sums[cp.atom_of_box(lin)] += integral;
                }
                corner::increment(&mut idx, &shape);
            }
            sums.iter().zip(atoms).map(|(s, a)| if a.mass > 0.0 { s / a.mass } else { 0.0 }).collect()
        }
    };
    let mass: Vec<f64> = atoms.iter().map(|a| a.mass).collect();
    if mass.iter().any(|m| *m == 0.0) {
        let reps: Vec<Vec<f64>> = atoms.iter().map(|a| a.upper.clone()).collect();
        fill_zero_mass(&mut values, &mass, &reps);
    }
    Ok(values)
}

/// (μ(B), ∫_B f dμ) for B = Π (a_i, b_i] (clipped to the support).
pub fn box_integral(spec: &MeasureSpec, b: &BoxRegion, f: &LipschitzWitness, order: GaussOrder) -> Result<(f64, f64)> {
    let eval = |x: &[f64]| f.eval(x);
    match spec.kind() {
        MeasureKind::UniformBox { domain } => {
            let lo: Vec<f64> = b.lo.iter().zip(&domain.lo).map(|(a, c)| a.max(*c)).collect();
            let hi: Vec<f64> = b.hi.iter().zip(&domain.hi).map(|(a, c)| a.min(*c)).collect();
            if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
                return Ok((0.0, 0.0));
            }
            let mass: f64 = (0..lo.len()).map(|i| (hi[i] - lo[i]) / domain.width(i)).product();
            Ok((mass, mass * quad::box_average(&eval, &lo, &hi, order)))
        }
        MeasureKind::ProductDensity { domain, .. } => {
            let d = domain.dim();
            let mut pieces: Vec<Vec<f64>> = Vec::with_capacity(d);
            for i in 0..d {
                let lo = b.lo[i].max(domain.lo[i]);
                let hi = b.hi[i].min(domain.hi[i]);
                if lo >= hi {
                    return Ok((0.0, 0.0));
                }
                let mut edges = vec![lo];
                edges.extend(spec.density_breaks(i, lo, hi));
                edges.push(hi);
                pieces.push(edges);
            }
            let shape: Vec<usize> = pieces.iter().map(|p| p.len() - 1).collect();
            let total: usize = shape.iter().product();
            let mut idx = vec![0usize; d];
            let (mut mass, mut integral) = (0.0, 0.0);
            for _ in 0..total {
                let lo: Vec<f64> = (0..d).map(|i| pieces[i][idx[i]]).collect();
                let hi: Vec<f64> = (0..d).map(|i| pieces[i][idx[i] + 1]).collect();
                let m: f64 = (0..d).map(|i| spec.axis_moments(i, lo[i], hi[i]).map(|x| x.0)).product::<Result<f64>>()?;
                if m > 0.0 {
                    mass += m;
                    integral += m * quad::box_average(&eval, &lo, &hi, order);
                }
                corner::increment(&mut idx, &shape);
            }
            Ok((mass, integral))
        }
        MeasureKind::DiscreteAtoms { atoms } => {
            let (mut mass, mut integral) = (0.0, 0.0);
            for (x, w) in atoms.iter().filter(|(x, _)| b.lo[0] < *x && *x <= b.hi[0]) {
                mass += w;
                integral += w * f.eval(&[*x]);
            }
            Ok((mass, integral))
        }
        MeasureKind::Gaussian { .. } | MeasureKind::TruncatedGaussian { .. } => {
            let (slo, shi) = spec.support_1d()?;
            let (lo, hi) = (b.lo[0].max(slo), b.hi[0].min(shi));
            let mass = spec.mass(lo, hi)?;
            if mass <= 0.0 {
                return Ok((0.0, 0.0));
            }
            let g = |x: f64| f.eval(&[x]) * spec.density(&[x]).unwrap_or(0.0);
            Ok((mass, quad::integrate_line(&g, lo, hi, 1e-12)))
        }
    }
}

/// ∫|x_axis − E[x_axis | cell]| dμ over a grid, in closed form.
pub fn grid_axis_loss(g: &GridPartition, spec: &MeasureSpec, axis: usize) -> Result<f64> {
    let t = g.tables(spec)?;
    let mut total = 0.0;
    for k in 0..t.mass[axis].len() {
        if t.mass[axis][k] > 0.0 {
            let (a, b) = t.measure_interval(axis, k);
            total += spec.axis_abs_moment(axis, a, b, t.axis_mean(axis, k))?;
        }
    }
    Ok(total)
}

fn corner_axis_loss(cp: &CornerPartition, spec: &MeasureSpec, axis: usize) -> Result<f64> {
    let d = cp.dim();
    let t = cp.tables();
    let shape = cp.grid().cells_per_axis();
    let means: Vec<f64> = cp.atoms().iter().map(|a| if a.mass > 0.0 { a.first[axis] / a.mass } else { 0.0 }).collect();
    let mut idx = vec![0usize; d];
    let mut total = 0.0;
    for lin in 0..cp.grid().num_cells() {
        let m_axis = t.mass[axis][idx[axis]];
        if m_axis > 0.0 {
            let others = t.cell_mass(&idx) / m_axis;
            if others > 0.0 {
                let (a, b) = t.measure_interval(axis, idx[axis]);
                total += others * spec.axis_abs_moment(axis, a, b, means[cp.atom_of_box(lin)])?;
            }
        }
        corner::increment(&mut idx, &shape);
    }
    Ok(total)
}

/// Σ over consecutive gaps of the sorted coordinates (with 0 and 1
/// appended) of gap² / 4: the exact L¹ loss of projecting x ↦ x onto the
/// grid through `coords` under the uniform law on [0, 1].
pub fn exact_loss_1d_symmetric(coords: &[f64]) -> f64 {
    let mut v: Vec<f64> = coords.iter().map(|x| x.clamp(0.0, 1.0)).collect();
    v.sort_by(f64::total_cmp);
    let mut prev = 0.0;
    let mut total = 0.0;
    for x in v.into_iter().chain(std::iter::once(1.0)) {
        total += (x - prev) * (x - prev) / 4.0;
        prev = x;
    }
    total
}

/// L¹ loss of a 1D grid projection by adaptive Simpson on every cell, split
/// at the cell value so the integrand is smooth on each piece for affine f.
pub fn grid_loss_quadrature_1d(g: &GridPartition, f: &LipschitzWitness, spec: &MeasureSpec) -> Result<f64> {
    if g.dim() != 1 {
        return Err(Error::Unsupported("quadrature loss path is one-dimensional".into()));
    }
    let values = grid_values(g, f, spec)?;
    let t = g.tables(spec)?;
    let mut total = 0.0;
    for (k, c) in values.iter().enumerate() {
        if t.mass[0][k] <= 0.0 {
            continue;
        }
        let (a, b) = t.measure_interval(0, k);
        if let MeasureKind::DiscreteAtoms { atoms } = spec.kind() {
            total += atoms.iter().filter(|(x, _)| a < *x && *x <= b).map(|(x, w)| w * (f.eval(&[*x]) - c).abs()).sum::<f64>();
            continue;
        }
        let (slo, shi) = spec.support_1d()?;
        let (lo, hi) = (a.max(slo), b.min(shi));
        let g = |x: f64| (f.eval(&[x]) - c).abs() * spec.density(&[x]).unwrap_or(0.0);
        let mut pts = vec![lo];
        if let LipschitzWitness::CoordinateProjection(_) = f {
            if *c > lo && *c < hi {
                pts.push(*c);
            }
        }
        pts.extend(spec.density_breaks(0, lo, hi));
        pts.push(hi);
        pts.sort_by(f64::total_cmp);
        for w in pts.windows(2) {
            total += quad::integrate_line(&g, w[0], w[1], 1e-13);
        }
    }
    Ok(total)
}

/// Cell values of a projection, evaluated at arbitrary points.
enum CellValues<'a> {
    Dense { partition: PartitionRef<'a>, values: Vec<f64> },
    GridAffine { grid: &'a GridPartition, tables: AxisTables, coef: Vec<f64>, offset: f64 },
    GridLazy { grid: &'a GridPartition, tables: AxisTables },
}

impl<'a> CellValues<'a> {
    /// Grids with more cells than `points` are evaluated lazily per point.
    fn new(partition: PartitionRef<'a>, f: &LipschitzWitness, spec: &MeasureSpec, points: usize) -> Result<Self> {
        if let PartitionRef::Grid(g) = partition {
            if let Some((coef, offset)) = f.affine(g.dim()) {
                return Ok(CellValues::GridAffine { grid: g, tables: g.tables(spec)?, coef, offset });
            }
            if !g.is_enumerable() || g.cell_count() > points as u128 {
                return Ok(CellValues::GridLazy { grid: g, tables: g.tables(spec)? });
            }
        }
        Ok(CellValues::Dense { partition, values: project(partition, f, spec)?.values })
    }

    fn value(&self, x: &[f64], f: &LipschitzWitness, spec: &MeasureSpec, cache: &mut HashMap<u128, f64>) -> Result<f64> {
        match self {
            CellValues::GridAffine { grid, tables, coef, offset } => {
                Ok(affine_cell_value(tables, &grid.cell_of(x), coef, *offset))
            }
            CellValues::GridLazy { grid, tables } => {
                let key = grid.cell_key(x);
                if let Some(v) = cache.get(&key) {
                    return Ok(*v);
                }
                let idx = grid.cell_of(x);
                let (m, integral) = box_integral(spec, &measure_box(tables, &idx), f, GaussOrder::Five)?;
                let v = if m > 0.0 { integral / m } else { f.eval(&grid.cell_box(&idx).center()) };
                cache.insert(key, v);
                Ok(v)
            }
            CellValues::Dense { partition, values } => {
                let cell = match partition {
                    PartitionRef::Grid(g) => g.locate(x),
                    PartitionRef::Corner(c) => c.locate(x),
                    PartitionRef::Signature(s) => s.locate(x).or_else(|| nearest_cell(s, x)),
                };
                Ok(cell.map(|c| values[c]).unwrap_or_else(|| f.eval(x)))
            }
        }
    }
}

fn nearest_cell(sp: &SignaturePartition, x: &[f64]) -> Option<usize> {
    sp.cells()
        .iter()
        .enumerate()
        .min_by(|a, b| distance(&a.1.representative, x).total_cmp(&distance(&b.1.representative, x)))
        .map(|(c, _)| c)
}

/// E[f | cell of x] for every point x.
pub fn projected_values(
    partition: PartitionRef<'_>,
    f: &LipschitzWitness,
    spec: &MeasureSpec,
    points: &PointSet,
) -> Result<Vec<f64>> {
    f.validate(spec.dim())?;
    let values = CellValues::new(partition, f, spec, points.len())?;
    let mut cache = HashMap::new();
    points.iter().map(|x| values.value(x, f, spec, &mut cache)).collect()
}

/// Monte Carlo L¹ loss on given evaluation points.
pub fn loss_on_points(partition: PartitionRef<'_>, f: &LipschitzWitness, spec: &MeasureSpec, eval: &PointSet) -> Result<Estimate> {
    let values = projected_values(partition, f, spec, eval)?;
    let devs: Vec<f64> = eval.iter().zip(&values).map(|(x, v)| (f.eval(x) - v).abs()).collect();
    Ok(mean_se(&devs))
}

fn exact_loss(partition: PartitionRef<'_>, f: &LipschitzWitness, spec: &MeasureSpec) -> Result<Option<f64>> {
    if let LipschitzWitness::Constant(_) = f {
        return Ok(Some(0.0));
    }
    Ok(match (partition, f) {
        (PartitionRef::Grid(g), LipschitzWitness::CoordinateProjection(i)) if spec.is_product() => {
            Some(grid_axis_loss(g, spec, *i)?)
        }
        (PartitionRef::Corner(cp), LipschitzWitness::CoordinateProjection(i)) => Some(corner_axis_loss(cp, spec, *i)?),
        (PartitionRef::Grid(g), _) if g.dim() == 1 => Some(grid_loss_quadrature_1d(g, f, spec)?),
        _ => None,
    })
}

/// ∫|E[f | cell] − f| dμ: exact where a closed form or 1D quadrature
/// applies, otherwise a Monte Carlo estimate from `m` fresh draws.
pub fn l1_loss(
    partition: PartitionRef<'_>,
    f: &LipschitzWitness,
    spec: &MeasureSpec,
    m: usize,
    stream: SeededStream,
) -> Result<Estimate> {
    f.validate(spec.dim())?;
    if let Some(v) = exact_loss(partition, f, spec)? {
        return Ok(Estimate::exact(v));
    }
    if m == 0 {
        return Err(Error::config("Monte Carlo sample size must be at least 1"));
    }
    let eval = spec.sample(m, stream)?;
    loss_on_points(partition, f, spec, &eval)
}

/// Which empirical σ-field a rate experiment builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// σ(A_{X_1}, …, A_{X_n}) from corner boxes.
    AsymmetricCorner,
    /// The grid splitting every coordinate at every sample coordinate.
    SymmetricGrid,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asymmetric" | "asymmetric-corner" | "corner" => Ok(Scheme::AsymmetricCorner),
            "symmetric" | "symmetric-grid" | "grid" => Ok(Scheme::SymmetricGrid),
            other => Err(Error::config(format!("unknown scheme '{other}' (expected symmetric or asymmetric)"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::AsymmetricCorner => "asymmetric-corner",
            Scheme::SymmetricGrid => "symmetric-grid",
        })
    }
}

/// One (trial, n) measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialPoint {
    pub n: usize,
    pub witness_loss: Vec<Estimate>,
    pub lipschitz: Vec<f64>,
    /// Largest witness loss and its standard error.
    pub max_loss: Estimate,
    pub diameter_bound: Estimate,
}

impl TrialPoint {
    /// Witnesses whose loss exceeds L·H by more than `k` combined standard
    /// errors.
    pub fn bracket_violations(&self, k: f64) -> usize {
        self.witness_loss
            .iter()
            .zip(&self.lipschitz)
            .filter(|(loss, l)| {
                let se = (loss.std_error.powi(2) + (*l * self.diameter_bound.std_error).powi(2)).sqrt();
                loss.value > *l * self.diameter_bound.value + k * se + 1e-12
            })
            .count()
    }
}

/// Loss-rate experiment output.
#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub scheme: Scheme,
    pub d: usize,
    pub schedule: Vec<usize>,
    pub trials: usize,
    pub mean_loss: Vec<f64>,
    pub std_err: Vec<f64>,
    pub diam_bound: Vec<f64>,
    pub diam_std_err: Vec<f64>,
    /// Fit of log mean loss against log n over the largest decade.
    pub loss_fit: Option<LogLogFit>,
    pub diam_fit: Option<LogLogFit>,
    pub bracket_checks: usize,
    pub bracket_violations: usize,
    /// Whether partition statistics were exact (as opposed to reference
    /// sample estimates).
    pub exact_partitions: bool,
    #[serde(skip)]
    pub per_trial: Vec<Vec<TrialPoint>>,
}

impl RateReport {
    /// CSV with columns `scheme,d,n,mean_loss,std_err,diam_bound`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scheme", "d", "n", "mean_loss", "std_err", "diam_bound"])?;
        for k in 0..self.schedule.len() {
            w.write_record([
                self.scheme.to_string(),
                self.d.to_string(),
                self.schedule[k].to_string(),
                self.mean_loss[k].to_string(),
                self.std_err[k].to_string(),
                self.diam_bound[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON summary: slope fits with confidence half-widths and the
    /// diameter-bound bracket check.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "scheme": self.scheme,
            "d": self.d,
            "trials": self.trials,
            "slope": self.loss_fit.map(|f| f.slope),
            "half_width": self.loss_fit.map(|f| f.half_width),
            "diam_slope": self.diam_fit.map(|f| f.slope),
            "diam_half_width": self.diam_fit.map(|f| f.half_width),
            "bracket_checks": self.bracket_checks,
            "bracket_violations": self.bracket_violations,
            "exact_partitions": self.exact_partitions,
        })
    }
}

/// Fit over schedule entries with n ≥ n_max / 10.
pub fn fit_largest_decade(schedule: &[usize], ys: &[f64]) -> Option<LogLogFit> {
    let n_max = *schedule.last()? as f64;
    let (xs, vs): (Vec<f64>, Vec<f64>) = schedule
        .iter()
        .zip(ys)
        .filter(|(n, _)| **n as f64 >= n_max / 10.0)
        .map(|(n, y)| (*n as f64, *y))
        .unzip();
    fit_log_log(&xs, &vs).ok()
}

/// Rate experiment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub scheme: Scheme,
    pub schedule: Vec<usize>,
    pub trials: usize,
    /// Monte Carlo evaluation points per trial.
    pub eval_points: usize,
    /// Reference points for signature partitions when exact corner
    /// partitions would be too large.
    pub reference_points: usize,
}

/// For every trial, one sample path of size max(schedule); at each n the
/// scheme's partition is built from the first n samples and every witness
/// loss and the diameter bound are recorded. Nested prefixes make each
/// trial a realization of the filtration.
pub fn rate_experiment(
    cfg: &RateConfig,
    spec: &MeasureSpec,
    witnesses: &[LipschitzWitness],
    stream: SeededStream,
) -> Result<RateReport> {
    let schedule = &cfg.schedule;
    if schedule.is_empty() || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("schedule must be nonempty and strictly increasing"));
    }
    if cfg.trials == 0 || cfg.eval_points == 0 {
        return Err(Error::config("trials and evaluation points must be at least 1"));
    }
    if witnesses.is_empty() {
        return Err(Error::config("at least one witness is required"));
    }
    let d = spec.dim();
    for w in witnesses {
        w.validate(d)?;
    }
    let domain = spec.domain().ok_or_else(|| Error::Unsupported("rate experiments need a bounded domain".into()))?;
    let n_max = *schedule.last().expect("nonempty");
    let exact = match cfg.scheme {
        Scheme::SymmetricGrid => spec.is_product(),
        Scheme::AsymmetricCorner => {
            spec.is_product() && (n_max as u128 + 1).saturating_pow(d as u32) <= EXACT_CELL_LIMIT as u128
        }
    };
    if !exact && cfg.scheme == Scheme::SymmetricGrid {
        return Err(Error::Unsupported(format!("grid losses need a product measure, got {}", spec.kind_name())));
    }
    if !exact && cfg.reference_points == 0 {
        return Err(Error::config("reference points must be at least 1"));
    }

    let results: Vec<Result<Vec<TrialPoint>>> = exec::map_indexed(cfg.trials, |trial| {
        let s = stream.child(trial as u64);
        let path = spec.sample(n_max, s.named("samples"))?;
        let eval = spec.sample(cfg.eval_points, s.named("eval"))?;
        let mut sig = if exact {
            None
        } else {
            let reference = Arc::new(spec.sample(cfg.reference_points, s.named("reference"))?);
            Some(SignaturePartition::new(domain.clone(), reference)?)
        };
        let mut done = 0;
        let mut out = Vec::with_capacity(schedule.len());
        for &n in schedule {
            let prefix = path.prefix(n);
            let point = match cfg.scheme {
                Scheme::SymmetricGrid => {
                    let g = GridPartition::build_symmetric(&prefix, &domain)?;
                    let diam = if g.is_enumerable() {
                        Estimate::exact(g.diameter_bound(spec)?)
                    } else {
                        mean_se(&eval.iter().map(|x| g.cell_box(&g.cell_of(x)).diameter()).collect::<Vec<_>>())
                    };
                    measure_point(PartitionRef::Grid(&g), n, spec, witnesses, &eval, diam)?
                }
                Scheme::AsymmetricCorner if exact => {
                    let cp = CornerPartition::build(&prefix, spec)?;
                    let diam = Estimate::exact(cp.diameter_bound());
                    measure_point(PartitionRef::Corner(&cp), n, spec, witnesses, &eval, diam)?
                }
                Scheme::AsymmetricCorner => {
                    let sp = sig.as_mut().expect("signature partition");
                    let gens: Vec<Generator> = prefix.iter().skip(done).map(|p| Generator::CornerBox(p.to_vec())).collect();
                    sp.extend(&gens)?;
                    let diam = Estimate::exact(sp.diameter_bound());
                    measure_point(PartitionRef::Signature(sp), n, spec, witnesses, &eval, diam)?
                }
            };
            done = n;
            out.push(point);
        }
        Ok(out)
    });
    let per_trial = results.into_iter().collect::<Result<Vec<_>>>()?;

    let column = |k: usize, pick: &dyn Fn(&TrialPoint) -> f64| -> Vec<f64> { per_trial.iter().map(|t| pick(&t[k])).collect() };
    let mut mean_loss = Vec::new();
    let mut std_err = Vec::new();
    let mut diam_bound = Vec::new();
    let mut diam_std_err = Vec::new();
    for k in 0..schedule.len() {
        let l = mean_se(&column(k, &|p| p.max_loss.value));
        let h = mean_se(&column(k, &|p| p.diameter_bound.value));
        mean_loss.push(l.value);
        std_err.push(l.std_error);
        diam_bound.push(h.value);
        diam_std_err.push(h.std_error);
    }
    let bracket_checks = per_trial.iter().flatten().map(|p| p.witness_loss.len()).sum();
    let bracket_violations = per_trial.iter().flatten().map(|p| p.bracket_violations(3.0)).sum();
    Ok(RateReport {
        scheme: cfg.scheme,
        d,
        schedule: schedule.clone(),
        trials: cfg.trials,
        loss_fit: fit_largest_decade(schedule, &mean_loss),
        diam_fit: fit_largest_decade(schedule, &diam_bound),
        mean_loss,
        std_err,
        diam_bound,
        diam_std_err,
        bracket_checks,
        bracket_violations,
        exact_partitions: exact,
        per_trial,
    })
}

fn measure_point(
    partition: PartitionRef<'_>,
    n: usize,
    spec: &MeasureSpec,
    witnesses: &[LipschitzWitness],
    eval: &PointSet,
    diameter_bound: Estimate,
) -> Result<TrialPoint> {
    let mut witness_loss = Vec::with_capacity(witnesses.len());
    for f in witnesses {
        let loss = match exact_loss(partition, f, spec)? {
            Some(v) => Estimate::exact(v),
            None => loss_on_points(partition, f, spec, eval)?,
        };
        witness_loss.push(loss);
    }
    let max_loss = *witness_loss
        .iter()
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one witness");
    Ok(TrialPoint {
        n,
        lipschitz: witnesses.iter().map(LipschitzWitness::lipschitz).collect(),
        witness_loss,
        max_loss,
        diameter_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit1() -> MeasureSpec {
        MeasureSpec::unit_cube(1)
    }

    fn grid1(splits: &[f64]) -> GridPartition {
        GridPartition::from_splits(BoxRegion::unit(1), vec![splits.to_vec()]).unwrap()
    }

    #[test]
    fn projection_examples() {
        let x = LipschitzWitness::CoordinateProjection(0);
        let trivial = GridPartition::trivial(BoxRegion::unit(1));
        assert_eq!(project(PartitionRef::Grid(&trivial), &x, &unit1()).unwrap().values, vec![0.5]);
        let halves = grid1(&[0.5]);
        assert_eq!(project(PartitionRef::Grid(&halves), &x, &unit1()).unwrap().values, vec![0.25, 0.75]);
    }

    #[test]
    fn projection_of_a_cell_constant_function_is_itself() {
        let f = LipschitzWitness::table(vec![0.0, 0.5, 1.0], vec![2.0, 2.0, 2.0]).unwrap();
        let g = grid1(&[0.3, 0.6]);
        let v = project(PartitionRef::Grid(&g), &f, &unit1()).unwrap().values;
        assert!(v.iter().all(|x| (x - 2.0).abs() < 1e-14));
    }

    #[test]
    fn loss_examples() {
        let x = LipschitzWitness::CoordinateProjection(0);
        let s = SeededStream::from_seed(1);
        let trivial = GridPartition::trivial(BoxRegion::unit(1));
        assert_eq!(l1_loss(PartitionRef::Grid(&trivial), &LipschitzWitness::Constant(3.0), &unit1(), 10, s).unwrap().value, 0.0);
        assert!((l1_loss(PartitionRef::Grid(&trivial), &x, &unit1(), 10, s).unwrap().value - 0.25).abs() < 1e-15);
        assert!((l1_loss(PartitionRef::Grid(&grid1(&[0.5])), &x, &unit1(), 10, s).unwrap().value - 0.125).abs() < 1e-15);
    }

    #[test]
    fn exact_1d_formula_examples() {
        assert_eq!(exact_loss_1d_symmetric(&[]), 0.25);
        assert_eq!(exact_loss_1d_symmetric(&[0.5]), 0.125);
        assert_eq!(exact_loss_1d_symmetric(&[0.25, 0.5, 0.75]), 0.0625);
    }

    #[test]
    fn quadrature_path_matches_exact_formula() {
        let x = LipschitzWitness::CoordinateProjection(0);
        for t in 0..100u64 {
            let n = 1 + (t % 17) as usize;
            let pts = unit1().sample(n, SeededStream::new(11, t)).unwrap();
            let g = GridPartition::build_symmetric(&pts, &BoxRegion::unit(1)).unwrap();
            let q = grid_loss_quadrature_1d(&g, &x, &unit1()).unwrap();
            assert!((q - exact_loss_1d_symmetric(pts.as_flat())).abs() < 1e-9);
        }
    }

    #[test]
    fn refinement_never_increases_exact_loss() {
        let pts = unit1().sample(50, SeededStream::from_seed(3)).unwrap();
        let mut prev = f64::INFINITY;
        for n in 0..=50 {
            let g = GridPartition::build_symmetric(&pts.prefix(n), &BoxRegion::unit(1)).unwrap();
            let l = grid_axis_loss(&g, &unit1(), 0).unwrap();
            assert!(l <= prev + 1e-15);
            prev = l;
        }
    }

    #[test]
    fn witnesses_respect_their_constants() {
        let dom = BoxRegion::unit(3);
        let fam = witness_family(&dom, SeededStream::from_seed(5));
        assert_eq!(fam.len(), 3 + 8 + 1);
        for f in &fam {
            assert!(empirical_lipschitz(f, &dom, 1000, SeededStream::from_seed(6)) <= f.lipschitz() + 1e-12);
        }
        let t = LipschitzWitness::table(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 0.5]).unwrap();
        assert_eq!(t.lipschitz(), 2.0);
        assert!(empirical_lipschitz(&t, &BoxRegion::unit(1), 1000, SeededStream::from_seed(7)) <= 2.0 + 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_contractive() {
        let spec = MeasureSpec::unit_cube(2);
        let pts = spec.sample(6, SeededStream::from_seed(8)).unwrap();
        let g = GridPartition::build_symmetric(&pts, &BoxRegion::unit(2)).unwrap();
        let f = LipschitzWitness::DistanceToPoint(vec![0.3, 0.4]);
        let p = project(PartitionRef::Grid(&g), &f, &spec).unwrap();
        // cell values lie within the range of f on the cell
        for lin in 0..g.num_cells() {
            let b = g.cell_box(&g.unravel(lin));
            let lo = f.eval(&b.lo.iter().zip(&b.hi).map(|(l, h)| 0.3f64.clamp(*l, *h)).collect::<Vec<_>>()).min(
                f.eval(&[0.3f64.clamp(b.lo[0], b.hi[0]), 0.4f64.clamp(b.lo[1], b.hi[1])]),
            );
            let far = [if 0.3 - b.lo[0] > b.hi[0] - 0.3 { b.lo[0] } else { b.hi[0] }, if 0.4 - b.lo[1] > b.hi[1] - 0.4 { b.lo[1] } else { b.hi[1] }];
            assert!(p.values[lin] >= lo - 1e-9 && p.values[lin] <= f.eval(&far) + 1e-9);
        }
        // projecting the projection changes nothing
        let table = |x: &[f64]| p.values[g.locate(x).unwrap()];
        let eval = spec.sample(2000, SeededStream::from_seed(9)).unwrap();
        let again: Vec<f64> = (0..g.num_cells()).map(|lin| {
            let b = g.cell_box(&g.unravel(lin));
            table(&b.center())
        }).collect();
        assert_eq!(again, p.values);
        let abs_proj: f64 = eval.iter().map(|x| table(x).abs()).sum::<f64>() / 2000.0;
        let abs_f: f64 = eval.iter().map(|x| f.eval(x).abs()).sum::<f64>() / 2000.0;
        assert!(abs_proj <= abs_f + 0.01);
    }

    #[test]
    fn corner_losses_match_monte_carlo() {
        let spec = MeasureSpec::unit_cube(2);
        let pts = spec.sample(15, SeededStream::from_seed(10)).unwrap();
        let cp = CornerPartition::build(&pts, &spec).unwrap();
        let x = LipschitzWitness::CoordinateProjection(1);
        let exact = l1_loss(PartitionRef::Corner(&cp), &x, &spec, 1, SeededStream::from_seed(1)).unwrap();
        assert_eq!(exact.std_error, 0.0);
        let eval = spec.sample(200_000, SeededStream::from_seed(11)).unwrap();
        let mc = loss_on_points(PartitionRef::Corner(&cp), &x, &spec, &eval).unwrap();
        assert!((mc.value - exact.value).abs() < 4.0 * mc.std_error, "{mc:?} vs {exact:?}");
        let h = cp.diameter_bound();
        assert!(exact.value <= h);
    }

    #[test]
    fn product_density_integration() {
        let spec = MeasureSpec::product_density(BoxRegion::unit(2), vec![vec![1.0, 3.0], vec![2.0, 1.0, 1.0]]).unwrap();
        let f = LipschitzWitness::Linear { direction: vec![0.6, 0.8], offset: 0.0 };
        let b = BoxRegion { lo: vec![0.2, 0.1], hi: vec![0.9, 0.7] };
        let (m, i) = box_integral(&spec, &b, &f, GaussOrder::Three).unwrap();
        assert!((m - spec.measure_of_box(&b).unwrap()).abs() < 1e-14);
        let mean = i / m;
        let eval = spec.sample(200_000, SeededStream::from_seed(12)).unwrap();
        let inside: Vec<f64> = eval.iter().filter(|x| b.contains(x)).map(|x| f.eval(x)).collect();
        let e = mean_se(&inside);
        assert!((e.value - mean).abs() < 4.0 * e.std_error);
    }

    #[test]
    fn symmetric_1d_rate_matches_closed_form() {
        let cfg = RateConfig {
            scheme: Scheme::SymmetricGrid,
            schedule: vec![10],
            trials: 400,
            eval_points: 10,
            reference_points: 0,
        };
        let r = rate_experiment(&cfg, &unit1(), &[LipschitzWitness::CoordinateProjection(0)], SeededStream::from_seed(13))
            .unwrap();
        assert!((r.mean_loss[0] - 1.0 / 24.0).abs() < 0.05 / 24.0, "{}", r.mean_loss[0]);
        let cons = rate_experiment(&cfg, &unit1(), &[LipschitzWitness::Constant(1.0)], SeededStream::from_seed(13)).unwrap();
        assert_eq!(cons.mean_loss[0], 0.0);
    }

    #[test]
    fn rate_report_outputs() {
        let cfg = RateConfig {
            scheme: Scheme::AsymmetricCorner,
            schedule: vec![4, 8, 16],
            trials: 5,
            eval_points: 500,
            reference_points: 500,
        };
        let spec = MeasureSpec::unit_cube(2);
        let fam = witness_family(&BoxRegion::unit(2), SeededStream::from_seed(1));
        let r = rate_experiment(&cfg, &spec, &fam, SeededStream::from_seed(2)).unwrap();
        assert!(r.exact_partitions);
        assert_eq!(r.bracket_violations, 0);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("scheme,d,n,mean_loss,std_err,diam_bound\n"));
        assert!(r.summary_json()["slope"].is_number());
        for trial in &r.per_trial {
            assert!(trial.windows(2).all(|w| w[1].diameter_bound.value <= w[0].diameter_bound.value + 1e-12));
        }
    }
}
