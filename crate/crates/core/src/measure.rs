//! Probability measures on boxes in ℝ^d and on ℝ.
//!
//! Every built-in kind supports exact sampling by inversion (or rejection for
//! the truncated gaussian), and the 1D kinds support exact interval masses,
//! conditional means and second moments. Product kinds also give exact box
//! masses, which is what lets grid partitions be evaluated without Monte
//! Carlo.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::geometry::{BoxRegion, PointSet};
use crate::quad;
use crate::rng::{SeededStream, StreamRng};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Piecewise-constant density on `[lo, hi]` with equal-width bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piecewise1d {
    pub lo: f64,
    pub hi: f64,
    /// Bin probabilities, summing to one.
    pub weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Piecewise1d {
    pub fn new(lo: f64, hi: f64, weights: Vec<f64>) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config(format!("invalid interval [{lo}, {hi}]")));
        }
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::config("density table entries must be positive and finite"));
        }
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut cumulative = Vec::with_capacity(weights.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(Self { lo, hi, weights, cumulative })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, vec![1.0])
    }

    fn bins(&self) -> usize {
        self.weights.len()
    }

    fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    fn edge(&self, k: usize) -> f64 {
        if k == self.bins() {
            self.hi
        } else {
            self.lo + k as f64 * self.bin_width()
        }
    }

    /// Density relative to the uniform law on `[lo, hi]`.
    pub fn relative_density(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let k = (((x - self.lo) / self.bin_width()) as usize).min(self.bins() - 1);
        self.weights[k] * self.bins() as f64
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let w = self.bin_width();
        let k = (((x - self.lo) / w) as usize).min(self.bins() - 1);
        let frac = (x - self.edge(k)) / w;
        (self.cumulative[k] + self.weights[k] * frac).min(1.0)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let k = self.cumulative[1..].partition_point(|c| *c < u).min(self.bins() - 1);
        let frac = if self.weights[k] > 0.0 { (u - self.cumulative[k]) / self.weights[k] } else { 0.0 };
        let x = self.edge(k) + frac.clamp(0.0, 1.0) * self.bin_width();
        x.clamp(self.lo, self.hi)
    }

    /// μ((a, b]).
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        (self.cdf(b) - self.cdf(a)).max(0.0)
    }

    /// Returns (mass, ∫ x dμ) over (a, b].
    fn moments(&self, a: f64, b: f64) -> (f64, f64) {
        let a = a.max(self.lo);
        let b = b.min(self.hi);
        if b <= a {
            return (0.0, 0.0);
        }
        let w = self.bin_width();
        let ka = (((a - self.lo) / w) as usize).min(self.bins() - 1);
        let kb = (((b - self.lo) / w) as usize).min(self.bins() - 1);
        let mut mass = 0.0;
        let mut first = 0.0;
        for k in ka..=kb {
            let l = self.edge(k).max(a);
            let h = self.edge(k + 1).min(b);
            if h <= l {
                continue;
            }
            let m = self.weights[k] * (h - l) / w;
            mass += m;
            first += m * 0.5 * (l + h);
        }
        (mass, first)
    }

    pub fn conditional_mean(&self, a: f64, b: f64) -> Result<f64> {
        let (mass, first) = self.moments(a, b);
        if !(mass > 0.0) {
            return Err(Error::EmptyConditioning { a, b });
        }
        Ok((first / mass).clamp(a.max(self.lo), b.min(self.hi)))
    }

    pub fn mean(&self) -> f64 {
        self.moments(self.lo, self.hi).1
    }

    pub fn second_moment(&self) -> f64 {
        (0..self.bins())
            .map(|k| {
                let (l, h) = (self.edge(k), self.edge(k + 1));
                self.weights[k] * (l * l + l * h + h * h) / 3.0
            })
            .sum()
    }

    /// Bin edges strictly inside `(a, b)`; density is constant between them.
    pub fn breakpoints_within(&self, a: f64, b: f64) -> Vec<f64> {
        (1..self.bins()).map(|k| self.edge(k)).filter(|e| *e > a && *e < b).collect()
    }

    fn density_bounds(&self) -> (f64, f64) {
        let n = self.bins() as f64;
        let max = self.weights.iter().cloned().fold(f64::MIN, f64::max) * n;
        let min = self.weights.iter().cloned().fold(f64::MAX, f64::min) * n;
        (min, max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeasureKind {
    UniformBox { domain: BoxRegion },
    ProductDensity { domain: BoxRegion, marginals: Vec<Piecewise1d> },
    /// Point masses on ℝ, sorted by location.
    DiscreteAtoms { atoms: Vec<(f64, f64)> },
    Gaussian { mean: f64, sd: f64 },
    TruncatedGaussian { mean: f64, sd: f64, lo: f64, hi: f64 },
}

/// A sampleable probability measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    kind: MeasureKind,
    /// Density-ratio bound relative to the uniform law on the domain, for
    /// kinds absolutely continuous on a box.
    gamma: Option<f64>,
}

impl MeasureSpec {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::uniform_box(BoxRegion::new(vec![lo], vec![hi])?)
    }

    pub fn unit_cube(dim: usize) -> Self {
        Self::uniform_box(BoxRegion::unit(dim)).expect("unit cube is valid")
    }

    pub fn uniform_box(domain: BoxRegion) -> Result<Self> {
        if (0..domain.dim()).any(|i| !(domain.width(i) > 0.0)) {
            return Err(Error::config("uniform box must have positive widths"));
        }
        Ok(Self { kind: MeasureKind::UniformBox { domain }, gamma: Some(1.0) })
    }

    /// Product of piecewise-constant densities, one weight table per axis
    /// (tables are normalized).
    pub fn product_density(domain: BoxRegion, tables: Vec<Vec<f64>>) -> Result<Self> {
        if tables.len() != domain.dim() {
            return Err(Error::config(format!(
                "{} density tables for a {}-dimensional box",
                tables.len(),
                domain.dim()
            )));
        }
        let marginals = tables
            .into_iter()
            .enumerate()
            .map(|(i, t)| Piecewise1d::new(domain.lo[i], domain.hi[i], t))
            .collect::<Result<Vec<_>>>()?;
        let (mut lo, mut hi) = (1.0, 1.0);
        for m in &marginals {
            let (a, b) = m.density_bounds();
            lo *= a;
            hi *= b;
        }
        let gamma = hi.max(1.0 / lo).max(1.0);
        Ok(Self { kind: MeasureKind::ProductDensity { domain, marginals }, gamma: Some(gamma) })
    }

    pub fn atoms(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::config("at least one atom required"));
        }
        if atoms.iter().any(|(x, w)| !x.is_finite() || !(*w > 0.0)) {
            return Err(Error::config("atoms need finite locations and positive weights"));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!("atom weights sum to {total}, not 1")));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::config("duplicate atom locations"));
        }
        Ok(Self { kind: MeasureKind::DiscreteAtoms { atoms }, gamma: None })
    }

    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) || !mean.is_finite() || !sd.is_finite() {
            return Err(Error::config("gaussian needs finite mean and positive sd"));
        }
        Ok(Self { kind: MeasureKind::Gaussian { mean, sd }, gamma: None })
    }

    pub fn standard_gaussian() -> Self {
        Self::gaussian(0.0, 1.0).expect("valid")
    }

    pub fn truncated_gaussian(mean: f64, sd: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(sd > 0.0) || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::config("truncated gaussian needs sd > 0 and finite lo < hi"));
        }
        let z = std_mass((lo - mean) / sd, (hi - mean) / sd);
        if !(z > 0.0) {
            return Err(Error::config("truncation interval carries no gaussian mass"));
        }
        let (dmin, dmax) = {
            let pdf = |x: f64| std_pdf((x - mean) / sd) / (sd * z) * (hi - lo);
            let peak = mean.clamp(lo, hi);
            (pdf(lo).min(pdf(hi)), pdf(peak))
        };
        let gamma = dmax.max(1.0 / dmin).max(1.0);
        Ok(Self { kind: MeasureKind::TruncatedGaussian { mean, sd, lo, hi }, gamma: Some(gamma) })
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            MeasureKind::UniformBox { .. } => "uniform-box",
            MeasureKind::ProductDensity { .. } => "product-density",
            MeasureKind::DiscreteAtoms { .. } => "discrete-atoms",
            MeasureKind::Gaussian { .. } => "gaussian",
            MeasureKind::TruncatedGaussian { .. } => "truncated-gaussian",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            MeasureKind::UniformBox { domain } | MeasureKind::ProductDensity { domain, .. } => domain.dim(),
            _ => 1,
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, MeasureKind::UniformBox { .. })
    }

    /// Product kinds: every box mass factorizes over coordinates.
    pub fn is_product(&self) -> bool {
        !matches!(self.kind, MeasureKind::DiscreteAtoms { .. })
    }

    /// Smallest box containing the support; `None` for unbounded kinds.
    pub fn domain(&self) -> Option<BoxRegion> {
        match &self.kind {
            MeasureKind::UniformBox { domain } | MeasureKind::ProductDensity { domain, .. } => Some(domain.clone()),
            MeasureKind::DiscreteAtoms { atoms } => {
                BoxRegion::new(vec![atoms[0].0], vec![atoms[atoms.len() - 1].0]).ok()
            }
            MeasureKind::Gaussian { .. } => None,
            MeasureKind::TruncatedGaussian { lo, hi, .. } => BoxRegion::new(vec![*lo], vec![*hi]).ok(),
        }
    }

    /// Support bounds of a 1D measure (possibly infinite).
    pub fn support_1d(&self) -> Result<(f64, f64)> {
        self.require_1d()?;
        Ok(match &self.kind {
            MeasureKind::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            _ => {
                let d = self.domain().expect("bounded kind");
                (d.lo[0], d.hi[0])
            }
        })
    }

    /// Density relative to the uniform law on the domain, for absolutely
    /// continuous kinds on a box.
    pub fn relative_density(&self, x: &[f64]) -> Option<f64> {
        match &self.kind {
            MeasureKind::UniformBox { domain } => Some(if domain.contains(x) { 1.0 } else { 0.0 }),
            MeasureKind::ProductDensity { marginals, .. } => {
                Some(marginals.iter().zip(x).map(|(m, v)| m.relative_density(*v)).product())
            }
            MeasureKind::TruncatedGaussian { mean, sd, lo, hi } => {
                if x[0] < *lo || x[0] > *hi {
                    return Some(0.0);
                }
                let z = std_mass((lo - mean) / sd, (hi - mean) / sd);
                Some(std_pdf((x[0] - mean) / sd) / (sd * z) * (hi - lo))
            }
            _ => None,
        }
    }

    /// Density with respect to Lebesgue measure, for absolutely continuous
    /// kinds.
    pub fn density(&self, x: &[f64]) -> Option<f64> {
        match &self.kind {
            MeasureKind::UniformBox { domain } | MeasureKind::ProductDensity { domain, .. } => {
                self.relative_density(x).map(|r| r / domain.volume())
            }
            MeasureKind::Gaussian { mean, sd } => Some(std_pdf((x[0] - mean) / sd) / sd),
            MeasureKind::TruncatedGaussian { lo, hi, .. } => self.relative_density(x).map(|r| r / (hi - lo)),
            MeasureKind::DiscreteAtoms { .. } => None,
        }
    }

    /// Marginal law of coordinate `axis` (product kinds only).
    pub fn marginal(&self, axis: usize) -> Result<MeasureSpec> {
        if axis >= self.dim() {
            return Err(Error::config(format!("axis {axis} out of range for dimension {}", self.dim())));
        }
        match &self.kind {
            MeasureKind::UniformBox { domain } => Self::uniform(domain.lo[axis], domain.hi[axis]),
            MeasureKind::ProductDensity { marginals, .. } => {
                let m = &marginals[axis];
                Self::product_density(BoxRegion::new(vec![m.lo], vec![m.hi])?, vec![m.weights.clone()])
            }
            _ => Ok(self.clone()),
        }
    }

    pub fn sample(&self, n: usize, stream: SeededStream) -> Result<PointSet> {
        let mut rng = stream.rng();
        self.sample_with(&mut rng, n)
    }

    pub fn sample_with(&self, rng: &mut StreamRng, n: usize) -> Result<PointSet> {
        let d = self.dim();
        let mut out = PointSet::with_capacity(d, n);
        let mut buf = vec![0.0; d];
        for _ in 0..n {
            self.draw(rng, &mut buf);
            out.push(&buf);
        }
        Ok(out)
    }

    /// One draw into `out` (length = dim).
    pub fn draw(&self, rng: &mut StreamRng, out: &mut [f64]) {
        match &self.kind {
            MeasureKind::UniformBox { domain } => {
                for (i, o) in out.iter_mut().enumerate() {
                    let u: f64 = rng.random();
                    *o = domain.lo[i] + u * domain.width(i);
                }
            }
            MeasureKind::ProductDensity { marginals, .. } => {
                for (m, o) in marginals.iter().zip(out.iter_mut()) {
                    *o = m.quantile(rng.random());
                }
            }
            MeasureKind::DiscreteAtoms { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut x = atoms[atoms.len() - 1].0;
                for (loc, w) in atoms {
                    acc += w;
                    if u < acc {
                        x = *loc;
                        break;
                    }
                }
                out[0] = x;
            }
            MeasureKind::Gaussian { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                out[0] = mean + sd * z;
            }
            MeasureKind::TruncatedGaussian { mean, sd, lo, hi } => loop {
                let z: f64 = rng.sample(StandardNormal);
                let x = mean + sd * z;
                if x >= *lo && x <= *hi {
                    out[0] = x;
                    break;
                }
            },
        }
    }

    fn require_1d(&self) -> Result<()> {
        if self.dim() != 1 {
            return Err(Error::Unsupported(format!(
                "operation needs a 1D measure, got dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }

    fn piecewise_1d(&self) -> Option<Piecewise1d> {
        match &self.kind {
            MeasureKind::UniformBox { domain } if domain.dim() == 1 => {
                Piecewise1d::uniform(domain.lo[0], domain.hi[0]).ok()
            }
            MeasureKind::ProductDensity { marginals, .. } if marginals.len() == 1 => Some(marginals[0].clone()),
            _ => None,
        }
    }

    /// μ((a, b]) for a 1D measure.
    pub fn mass(&self, a: f64, b: f64) -> Result<f64> {
        self.require_1d()?;
        if !(a < b) {
            return Ok(0.0);
        }
        if let Some(p) = self.piecewise_1d() {
            return Ok(p.mass(a, b));
        }
        Ok(match &self.kind {
            MeasureKind::DiscreteAtoms { atoms } => {
                atoms.iter().filter(|(x, _)| a < *x && *x <= b).map(|(_, w)| w).sum()
            }
            MeasureKind::Gaussian { mean, sd } => std_mass((a - mean) / sd, (b - mean) / sd),
            MeasureKind::TruncatedGaussian { mean, sd, lo, hi } => {
                let (a2, b2) = (a.max(*lo), b.min(*hi));
                if b2 <= a2 {
                    0.0
                } else {
                    std_mass((a2 - mean) / sd, (b2 - mean) / sd) / std_mass((lo - mean) / sd, (hi - mean) / sd)
                }
            }
            _ => unreachable!("piecewise kinds handled above"),
        })
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.require_1d()?;
        let (lo, _) = self.support_1d()?;
        if x < lo {
            return Ok(0.0);
        }
        if let MeasureKind::DiscreteAtoms { atoms } = &self.kind {
            return Ok(atoms.iter().filter(|(loc, _)| *loc <= x).map(|(_, w)| w).sum::<f64>().min(1.0));
        }
        Ok(self.mass(f64::NEG_INFINITY.max(lo - 1.0), x)?.clamp(0.0, 1.0))
    }

    /// Generalized inverse CDF: the smallest x with F(x) ≥ u.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        self.require_1d()?;
        let u = u.clamp(0.0, 1.0);
        if let Some(p) = self.piecewise_1d() {
            return Ok(p.quantile(u));
        }
        Ok(match &self.kind {
            MeasureKind::DiscreteAtoms { atoms } => {
                let mut acc = 0.0;
                for (x, w) in atoms {
                    acc += w;
                    if acc >= u - 1e-15 {
                        return Ok(*x);
                    }
                }
                atoms[atoms.len() - 1].0
            }
            MeasureKind::Gaussian { mean, sd } => mean + sd * std_quantile(u),
            MeasureKind::TruncatedGaussian { mean, sd, lo, hi } => {
                let pa = std_cdf((lo - mean) / sd);
                let pb = std_cdf((hi - mean) / sd);
                (mean + sd * std_quantile(pa + u * (pb - pa))).clamp(*lo, *hi)
            }
            _ => unreachable!(),
        })
    }

    /// E[X | a < X ≤ b] for a 1D measure.
    pub fn conditional_mean(&self, a: f64, b: f64) -> Result<f64> {
        self.require_1d()?;
        if !(a < b) {
            return Err(Error::EmptyConditioning { a, b });
        }
        if let Some(p) = self.piecewise_1d() {
            return p.conditional_mean(a, b);
        }
        match &self.kind {
            MeasureKind::DiscreteAtoms { atoms } => {
                let (mut m, mut s) = (0.0, 0.0);
                for (x, w) in atoms.iter().filter(|(x, _)| a < *x && *x <= b) {
                    m += w;
                    s += w * x;
                }
                if m > 0.0 {
                    Ok((s / m).clamp(a, b))
                } else {
                    Err(Error::EmptyConditioning { a, b })
                }
            }
            MeasureKind::Gaussian { mean, sd } => gaussian_conditional_mean(*mean, *sd, a, b),
            MeasureKind::TruncatedGaussian { mean, sd, lo, hi } => {
                let (a2, b2) = (a.max(*lo), b.min(*hi));
                if b2 <= a2 {
                    return Err(Error::EmptyConditioning { a, b });
                }
                gaussian_conditional_mean(*mean, *sd, a2, b2).map_err(|_| Error::EmptyConditioning { a, b })
            }
            _ => unreachable!(),
        }
    }

    /// Mean vector.
    pub fn mean(&self) -> Vec<f64> {
        match &self.kind {
            MeasureKind::UniformBox { domain } => domain.center(),
            MeasureKind::ProductDensity { marginals, .. } => marginals.iter().map(|m| m.mean()).collect(),
            MeasureKind::DiscreteAtoms { atoms } => vec![atoms.iter().map(|(x, w)| x * w).sum()],
            MeasureKind::Gaussian { mean, .. } => vec![*mean],
            MeasureKind::TruncatedGaussian { lo, hi, .. } => {
                vec![self.conditional_mean(lo - 1.0, *hi).expect("positive mass")]
            }
        }
    }

    /// E[X²] for a 1D measure.
    pub fn second_moment(&self) -> Result<f64> {
        self.require_1d()?;
        if let Some(p) = self.piecewise_1d() {
            return Ok(p.second_moment());
        }
        Ok(match &self.kind {
            MeasureKind::DiscreteAtoms { atoms } => atoms.iter().map(|(x, w)| w * x * x).sum(),
            MeasureKind::Gaussian { mean, sd } => mean * mean + sd * sd,
            MeasureKind::TruncatedGaussian { mean, sd, lo, hi } => {
                let z = std_mass((lo - mean) / sd, (hi - mean) / sd);
                let f = |x: f64| x * x * std_pdf((x - mean) / sd) / sd;
                quad::adaptive_simpson(&f, *lo, *hi, quad::SIMPSON_TOL * z) / z
            }
            _ => unreachable!(),
        })
    }

    /// μ(box) for a closed box, exact for every built-in kind.
    pub fn measure_of_box(&self, b: &BoxRegion) -> Result<f64> {
        if b.dim() != self.dim() {
            return Err(Error::Unsupported(format!(
                "box of dimension {} for a {}-dimensional measure",
                b.dim(),
                self.dim()
            )));
        }
        Ok(match &self.kind {
            MeasureKind::UniformBox { domain } => match domain.intersect(b) {
                Some(i) => i.volume() / domain.volume(),
                None => 0.0,
            },
            MeasureKind::ProductDensity { marginals, .. } => {
                marginals.iter().enumerate().map(|(i, m)| m.mass(b.lo[i], b.hi[i])).product()
            }
            MeasureKind::DiscreteAtoms { atoms } => {
                atoms.iter().filter(|(x, _)| b.lo[0] <= *x && *x <= b.hi[0]).map(|(_, w)| w).sum()
            }
            _ => self.mass(b.lo[0], b.hi[0])?,
        })
    }

    /// Mass and first moment of coordinate `axis` restricted to the
    /// interval `(a, b]` of that axis, for product kinds.
    pub fn axis_moments(&self, axis: usize, a: f64, b: f64) -> Result<(f64, f64)> {
        match &self.kind {
            MeasureKind::UniformBox { domain } => {
                let lo = a.max(domain.lo[axis]);
                let hi = b.min(domain.hi[axis]);
                if hi <= lo {
                    return Ok((0.0, 0.0));
                }
                let m = (hi - lo) / domain.width(axis);
                Ok((m, m * 0.5 * (lo + hi)))
            }
            MeasureKind::ProductDensity { marginals, .. } => Ok(marginals[axis].moments(a, b)),
            _ if axis == 0 => {
                let m = self.mass(a, b)?;
                if m > 0.0 {
                    Ok((m, m * self.conditional_mean(a, b)?))
                } else {
                    Ok((0.0, 0.0))
                }
            }
            _ => Err(Error::Unsupported("axis moments on a 1D measure".into())),
        }
    }

    /// ∫_{(a, b]} |x_axis − c| dμ_axis, for product kinds (axis 0 for 1D).
    pub fn axis_abs_moment(&self, axis: usize, a: f64, b: f64, c: f64) -> Result<f64> {
        let mut total = 0.0;
        if a < c {
            let (m, f) = self.axis_moments(axis, a, b.min(c))?;
            total += c * m - f;
        }
        if c < b {
            let (m, f) = self.axis_moments(axis, a.max(c), b)?;
            total += f - c * m;
        }
        Ok(total.max(0.0))
    }

    /// Breakpoints of the density along `axis` strictly inside `(a, b)`.
    pub fn density_breaks(&self, axis: usize, a: f64, b: f64) -> Vec<f64> {
        match &self.kind {
            MeasureKind::ProductDensity { marginals, .. } => marginals[axis].breakpoints_within(a, b),
            _ => Vec::new(),
        }
    }
}

/// Law of the radii attached to sampled balls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RadiusSpec {
    Uniform { max: f64 },
    Exponential { rate: f64 },
    /// `r0 · ratio^k` with probability `(1 − p) p^k`, k = 0, 1, …; the radii
    /// accumulate at zero, so every interval (0, ε) has positive mass.
    Geometric { r0: f64, ratio: f64, p: f64 },
}

impl RadiusSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            RadiusSpec::Uniform { max } => max > 0.0 && max.is_finite(),
            RadiusSpec::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            RadiusSpec::Geometric { r0, ratio, p } => r0 > 0.0 && ratio > 0.0 && ratio < 1.0 && p > 0.0 && p < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid radius law {self:?}")))
        }
    }

    pub fn draw(&self, rng: &mut StreamRng) -> f64 {
        match *self {
            RadiusSpec::Uniform { max } => {
                // (0, max]: avoids a zero radius
                max * (1.0 - rng.random::<f64>())
            }
            RadiusSpec::Exponential { rate } => -(1.0 - rng.random::<f64>()).ln() / rate,
            RadiusSpec::Geometric { r0, ratio, p } => {
                let mut k = 0;
                while rng.random::<f64>() < p && k < 1000 {
                    k += 1;
                }
                r0 * ratio.powi(k)
            }
        }
    }

    /// ν((0, ε)).
    pub fn mass_below(&self, eps: f64) -> f64 {
        match *self {
            RadiusSpec::Uniform { max } => (eps / max).min(1.0),
            RadiusSpec::Exponential { rate } => 1.0 - (-rate * eps).exp(),
            RadiusSpec::Geometric { r0, ratio, p } => {
                if eps > r0 {
                    return 1.0;
                }
                // smallest k with r0 ratio^k < eps
                let k = ((eps / r0).ln() / ratio.ln()).floor() as i32 + 1;
                p.powi(k.max(0))
            }
        }
    }
}

pub(crate) fn std_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Upper tail P(Z > z).
fn std_upper(z: f64) -> f64 {
    if z == f64::INFINITY {
        return 0.0;
    }
    if z == f64::NEG_INFINITY {
        return 1.0;
    }
    0.5 * erfc(z / SQRT_2)
}

pub(crate) fn std_cdf(z: f64) -> f64 {
    std_upper(-z)
}

/// P(α < Z ≤ β), computed in the tail where it is accurate.
fn std_mass(alpha: f64, beta: f64) -> f64 {
    if beta <= alpha {
        return 0.0;
    }
    if alpha >= 0.0 {
        std_upper(alpha) - std_upper(beta)
    } else if beta <= 0.0 {
        std_upper(-beta) - std_upper(-alpha)
    } else {
        1.0 - std_upper(beta) - std_upper(-alpha)
    }
}

fn std_quantile(u: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    if u <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    Normal::standard().inverse_cdf(u)
}

fn gaussian_conditional_mean(mean: f64, sd: f64, a: f64, b: f64) -> Result<f64> {
    let alpha = (a - mean) / sd;
    let beta = (b - mean) / sd;
    let z = std_mass(alpha, beta);
    if !(z > 0.0) {
        return Err(Error::EmptyConditioning { a, b });
    }
    let pa = if alpha.is_finite() { std_pdf(alpha) } else { 0.0 };
    let pb = if beta.is_finite() { std_pdf(beta) } else { 0.0 };
    Ok((mean + sd * (pa - pb) / z).clamp(a, b))
}
