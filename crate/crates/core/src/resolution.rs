//! Recovering target events from empirical σ-fields.
//!
//! The best cell-union approximation of an event B is obtained by rounding
//! the per-cell conditional probability of B at 1/2 (ties include the
//! cell). Its distance μ(A* △ B) is exact for box targets on grid and
//! corner partitions under product measures, and an in-sample estimate on
//! the reference points of a signature partition.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::{distance, dominated, BoxRegion, PointSet};
use crate::measure::{MeasureSpec, RadiusSpec};
use crate::partition::{CornerPartition, Generator, GridPartition, Partition, SignaturePartition};
use crate::rng::SeededStream;
use crate::stats::{binomial_se, mean_se, Estimate};

type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// An event to be recovered.
#[derive(Clone)]
pub enum TargetEvent {
    /// `A_q = {y in the domain : y ≤ q}`.
    CornerBox(Vec<f64>),
    /// Closed box.
    Box(BoxRegion),
    /// Closed ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// Arbitrary membership predicate, evaluated on reference points.
    Predicate { label: String, test: Predicate },
}

impl fmt::Debug for TargetEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetEvent::CornerBox(q) => f.debug_tuple("CornerBox").field(q).finish(),
            TargetEvent::Box(b) => f.debug_tuple("Box").field(b).finish(),
            TargetEvent::Ball { center, radius } => {
                f.debug_struct("Ball").field("center", center).field("radius", radius).finish()
            }
            TargetEvent::Predicate { label, .. } => f.debug_tuple("Predicate").field(label).finish(),
        }
    }
}

impl TargetEvent {
    pub fn predicate(label: impl Into<String>, test: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        TargetEvent::Predicate { label: label.into(), test: Arc::new(test) }
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        match self {
            TargetEvent::CornerBox(q) => dominated(y, q),
            TargetEvent::Box(b) => b.contains(y),
            TargetEvent::Ball { center, radius } => distance(y, center) <= *radius,
            TargetEvent::Predicate { test, .. } => test(y),
        }
    }

    /// The event as a closed box inside `domain`, when it is one.
    pub fn as_box(&self, domain: &BoxRegion) -> Option<BoxRegion> {
        match self {
            TargetEvent::CornerBox(q) => {
                let hi: Vec<f64> = q.iter().zip(&domain.hi).map(|(a, b)| a.min(*b)).collect();
                if hi.iter().zip(&domain.lo).any(|(h, l)| h < l) {
                    // empty: a degenerate box at the lower corner
                    Some(BoxRegion { lo: domain.lo.clone(), hi: domain.lo.clone() })
                } else {
                    Some(BoxRegion { lo: domain.lo.clone(), hi })
                }
            }
            TargetEvent::Box(b) => Some(b.clone()),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        let fmt_pt = |p: &[f64]| p.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(";");
        match self {
            TargetEvent::CornerBox(q) => format!("corner({})", fmt_pt(q)),
            TargetEvent::Box(b) => format!("box({}|{})", fmt_pt(&b.lo), fmt_pt(&b.hi)),
            TargetEvent::Ball { center, radius } => format!("ball({}|{radius:.4})", fmt_pt(center)),
            TargetEvent::Predicate { label, .. } => label.clone(),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            TargetEvent::CornerBox(q) => q.len() == dim,
            TargetEvent::Box(b) => b.dim() == dim,
            TargetEvent::Ball { center, radius } => center.len() == dim && *radius > 0.0,
            TargetEvent::Predicate { .. } => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("target {self:?} does not fit dimension {dim}")))
        }
    }
}

/// The rounded cell union and its distance to the target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Approximation {
    /// `chosen[c]` is true iff cell `c` belongs to A*.
    pub chosen: Vec<bool>,
    /// μ(A* △ B).
    pub distance: f64,
}

/// Closest-indicator rounding from per-cell masses μ(A) and overlaps
/// μ(A ∩ B). A cell joins A* iff it has positive mass and
/// μ(A \ B) ≤ μ(A ∩ B), i.e. iff μ(B | A) ≥ 1/2; the distance adds the
/// cheaper of the two per-cell costs in cell order.
pub fn round_cells(mass: &[f64], overlap: &[f64]) -> Approximation {
    let mut chosen = Vec::with_capacity(mass.len());
    let mut distance = 0.0;
    for (m, b) in mass.iter().zip(overlap) {
        let outside = (m - b).max(0.0);
        let take = *m > 0.0 && outside <= *b;
        chosen.push(take);
        distance += if take { outside } else { *b };
    }
    Approximation { chosen, distance }
}

/// Rounding from integer counts on `total` reference points.
pub fn round_counts(count: &[usize], inside: &[usize], total: usize) -> Approximation {
    let mut chosen = Vec::with_capacity(count.len());
    let mut miss = 0usize;
    for (c, b) in count.iter().zip(inside) {
        let take = *c > 0 && 2 * b >= *c;
        chosen.push(take);
        miss += if take { c - b } else { *b };
    }
    Approximation { chosen, distance: miss as f64 / total as f64 }
}

/// A partition to approximate against.
#[derive(Debug, Clone, Copy)]
pub enum PartitionRef<'a> {
    Grid(&'a GridPartition),
    Corner(&'a CornerPartition),
    Signature(&'a SignaturePartition),
}

/// Closest-indicator approximation of `target` by cells of `partition`.
/// Grid and corner partitions need box targets and a product measure;
/// signature partitions accept any target and use their reference points.
pub fn best_approximation(partition: PartitionRef<'_>, target: &TargetEvent, spec: &MeasureSpec) -> Result<Approximation> {
    match partition {
        PartitionRef::Grid(g) => {
            target.validate(g.dim())?;
            let b = box_target(target, g.domain())?;
            let t = g.tables(spec)?;
            if !g.is_enumerable() {
                return Err(Error::Unsupported("grid too large for exact rounding".into()));
            }
            let overlap_axis = axis_overlaps(spec, &b, |i, k| t.measure_interval(i, k), &t.mass)?;
            let n = g.num_cells();
            let mut mass = Vec::with_capacity(n);
            let mut overlap = Vec::with_capacity(n);
            for lin in 0..n {
                let idx = g.unravel(lin);
                mass.push(t.cell_mass(&idx));
                overlap.push(idx.iter().enumerate().map(|(i, k)| overlap_axis[i][*k]).product());
            }
            Ok(round_cells(&mass, &overlap))
        }
        PartitionRef::Corner(cp) => {
            target.validate(cp.dim())?;
            let b = box_target(target, cp.grid().domain())?;
            let overlap = cp.masses_within(&b, spec)?;
            let mass: Vec<f64> = cp.atoms().iter().map(|a| a.mass).collect();
            Ok(round_cells(&mass, &overlap))
        }
        PartitionRef::Signature(sp) => {
            target.validate(sp.dim())?;
            let count: Vec<usize> = sp.cells().iter().map(|c| c.sample_count).collect();
            let inside = sp.cell_counts(|y| target.contains(y));
            Ok(round_counts(&count, &inside, sp.reference().len()))
        }
    }
}

fn box_target(target: &TargetEvent, domain: &BoxRegion) -> Result<BoxRegion> {
    target
        .as_box(domain)
        .ok_or_else(|| Error::Unsupported(format!("exact rounding needs a box target, got {}", target.label())))
}

fn axis_overlaps(
    spec: &MeasureSpec,
    b: &BoxRegion,
    interval: impl Fn(usize, usize) -> (f64, f64),
    mass: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    (0..b.dim())
        .map(|i| {
            (0..mass[i].len())
                .map(|k| {
                    let (a, c) = interval(i, k);
                    let lo = a.max(b.lo[i].next_down());
                    let hi = c.min(b.hi[i]);
                    if hi > lo {
                        spec.axis_moments(i, lo, hi).map(|m| m.0)
                    } else {
                        Ok(0.0)
                    }
                })
                .collect()
        })
        .collect()
}

/// μ(A △ B): exact when both sets are boxes and the measure is a product,
/// otherwise a Monte Carlo estimate from `m` draws with its binomial
/// standard error.
pub fn symmetric_difference(
    spec: &MeasureSpec,
    a: &TargetEvent,
    b: &TargetEvent,
    m: usize,
    stream: SeededStream,
) -> Result<Estimate> {
    if let Some(domain) = spec.domain() {
        if let (Some(ba), Some(bb)) = (a.as_box(&domain), b.as_box(&domain)) {
            if spec.is_product() {
                let ma = spec.measure_of_box(&ba)?;
                let mb = spec.measure_of_box(&bb)?;
                let mi = match ba.intersect(&bb) {
                    Some(i) => spec.measure_of_box(&i)?,
                    None => 0.0,
                };
                return Ok(Estimate::exact((ma + mb - 2.0 * mi).max(0.0)));
            }
        }
    }
    if m == 0 {
        return Err(Error::config("Monte Carlo sample size must be at least 1"));
    }
    let pts = spec.sample(m, stream)?;
    let hits = pts.iter().filter(|y| a.contains(y) != b.contains(y)).count();
    let p = hits as f64 / m as f64;
    Ok(Estimate { value: p, std_error: binomial_se(p, m) })
}

/// Inner approximation of a corner box by a corner box from the samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerBox {
    /// `r_i = max {x_i : x ∈ samples, x ≤ q}`; `None` if no sample is
    /// dominated by q.
    pub r: Option<Vec<f64>>,
    /// μ(A_q).
    pub target_mass: f64,
    /// μ(A_r) (zero when `r` is `None`).
    pub inner_mass: f64,
    /// μ(A_q \ A_r) = μ(A_q) − μ(A_r), since A_r ⊆ A_q.
    pub gap: f64,
}

/// Coordinate-wise maximum of the samples dominated by `q`.
pub fn inner_box(samples: &PointSet, q: &[f64]) -> Option<Vec<f64>> {
    let mut r: Option<Vec<f64>> = None;
    for x in samples.iter().filter(|x| dominated(x, q)) {
        match r.as_mut() {
            None => r = Some(x.to_vec()),
            Some(r) => r.iter_mut().zip(x).for_each(|(a, b)| *a = a.max(*b)),
        }
    }
    r
}

/// [`inner_box`] together with the masses of A_q and A_r under `spec`.
pub fn inner_box_approx(samples: &PointSet, q: &[f64], spec: &MeasureSpec) -> Result<InnerBox> {
    let domain = spec.domain().ok_or_else(|| Error::Unsupported("inner boxes need a bounded domain".into()))?;
    let corner = |p: &[f64]| TargetEvent::CornerBox(p.to_vec()).as_box(&domain).expect("corner boxes are boxes");
    let target_mass = spec.measure_of_box(&corner(q))?;
    let r = inner_box(samples, q);
    let inner_mass = match &r {
        Some(r) => spec.measure_of_box(&corner(r))?,
        None => 0.0,
    };
    Ok(InnerBox { r, target_mass, inner_mass, gap: (target_mass - inner_mass).max(0.0) })
}

/// Mean best-approximation distance per sample count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub target_id: String,
    pub schedule: Vec<usize>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub trials: usize,
    /// Smallest distance the estimator resolves (1/√M for reference-sample
    /// estimates, 0 when exact).
    pub floor: f64,
    /// Per-trial distances, `per_trial[t][k]` for schedule entry `k`.
    #[serde(skip)]
    pub per_trial: Vec<Vec<f64>>,
}

impl ConvergenceTrace {
    fn from_trials(target_id: String, schedule: &[usize], per_trial: Vec<Vec<f64>>, floor: f64) -> Self {
        let (mean, std_error) = (0..schedule.len())
            .map(|k| {
                let col: Vec<f64> = per_trial.iter().map(|t| t[k]).collect();
                let e = mean_se(&col);
                (e.value, e.std_error)
            })
            .unzip();
        Self { target_id, schedule: schedule.to_vec(), mean, std_error, trials: per_trial.len(), floor, per_trial }
    }

    /// Whether every step down the schedule stays within `k` standard
    /// errors of non-increasing.
    pub fn is_nonincreasing_within(&self, k: f64) -> bool {
        self.mean.windows(2).zip(self.std_error.windows(2)).all(|(m, s)| {
            let tol = k * (s[0] * s[0] + s[1] * s[1]).sqrt();
            m[1] <= m[0] + tol
        })
    }
}

/// `count` corner-box targets A_q with q uniform in `domain`.
pub fn random_corner_targets(domain: &BoxRegion, count: usize, stream: SeededStream) -> Vec<TargetEvent> {
    let mut rng = stream.rng();
    (0..count)
        .map(|_| {
            TargetEvent::CornerBox((0..domain.dim()).map(|i| domain.lo[i] + rng.random::<f64>() * domain.width(i)).collect())
        })
        .collect()
}

/// Writes traces as CSV: `target-id,n,trial-mean-distance,std-error,trials`.
pub fn write_traces_csv<W: Write>(out: W, traces: &[ConvergenceTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["target-id", "n", "trial-mean-distance", "std-error", "trials"])?;
    for t in traces {
        for k in 0..t.schedule.len() {
            w.write_record([
                t.target_id.clone(),
                t.schedule[k].to_string(),
                t.mean[k].to_string(),
                t.std_error[k].to_string(),
                t.trials.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn check_schedule(schedule: &[usize], trials: usize) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::config("schedule must not be empty"));
    }
    if schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("schedule must be strictly increasing"));
    }
    if trials == 0 {
        return Err(Error::config("trials must be at least 1"));
    }
    Ok(())
}

/// Recovery of targets by the corner-box σ-fields of one growing sample
/// path per trial.
///
/// Box targets under a product measure use the exact corner partition;
/// any other target switches the whole run to signature partitions over
/// `m_ref` reference points.
pub fn monotone_convergence_trace(
    spec: &MeasureSpec,
    targets: &[TargetEvent],
    schedule: &[usize],
    trials: usize,
    m_ref: usize,
    stream: SeededStream,
) -> Result<Vec<ConvergenceTrace>> {
    check_schedule(schedule, trials)?;
    let domain = spec.domain().ok_or_else(|| Error::Unsupported("recovery traces need a bounded domain".into()))?;
    for t in targets {
        t.validate(spec.dim())?;
    }
    let n_max = *schedule.last().expect("nonempty");
    let exact = spec.is_product()
        && targets.iter().all(|t| t.as_box(&domain).is_some())
        && (n_max as u128 + 1).saturating_pow(spec.dim() as u32) <= crate::partition::EXACT_CELL_LIMIT as u128;
    let results: Vec<Result<Vec<Vec<f64>>>> = exec::map_indexed(trials, |trial| {
        let s = stream.child(trial as u64);
        let path = spec.sample(n_max, s.named("samples"))?;
        let mut out = vec![Vec::with_capacity(schedule.len()); targets.len()];
        if exact {
            for &n in schedule {
                let cp = CornerPartition::build(&path.prefix(n), spec)?;
                for (t, target) in targets.iter().enumerate() {
                    out[t].push(best_approximation(PartitionRef::Corner(&cp), target, spec)?.distance);
                }
            }
        } else {
            let reference = Arc::new(spec.sample(m_ref, s.named("reference"))?);
            let mut sp = SignaturePartition::new(domain.clone(), reference)?;
            let mut done = 0;
            for &n in schedule {
                let gens: Vec<Generator> =
                    path.prefix(n).iter().skip(done).map(|p| Generator::CornerBox(p.to_vec())).collect();
                sp.extend(&gens)?;
                done = n;
                for (t, target) in targets.iter().enumerate() {
                    out[t].push(best_approximation(PartitionRef::Signature(&sp), target, spec)?.distance);
                }
            }
        }
        Ok(out)
    });
    let per_trial: Vec<Vec<Vec<f64>>> = results.into_iter().collect::<Result<_>>()?;
    let floor = if exact { 0.0 } else { 1.0 / (m_ref as f64).sqrt() };
    Ok(targets
        .iter()
        .enumerate()
        .map(|(t, target)| {
            let rows = per_trial.iter().map(|tr| tr[t].clone()).collect();
            ConvergenceTrace::from_trials(target.label(), schedule, rows, floor)
        })
        .collect())
}

/// Recovery of a target by σ-fields generated by balls with random radii,
/// evaluated on `m_ref` reference points per trial (in-sample estimate).
pub fn ball_convergence_trace(
    spec: &MeasureSpec,
    radii: &RadiusSpec,
    target: &TargetEvent,
    schedule: &[usize],
    trials: usize,
    m_ref: usize,
    stream: SeededStream,
) -> Result<ConvergenceTrace> {
    check_schedule(schedule, trials)?;
    radii.validate()?;
    target.validate(spec.dim())?;
    if !spec.is_product() {
        return Err(Error::Unsupported(format!("ball traces need a uniform or product measure, got {}", spec.kind_name())));
    }
    let domain = spec.domain().ok_or_else(|| Error::Unsupported("ball traces need a bounded domain".into()))?;
    let n_max = *schedule.last().expect("nonempty");
    let results: Vec<Result<Vec<f64>>> = exec::map_indexed(trials, |trial| {
        let s = stream.child(trial as u64);
        let (centers, r) = crate::partition::sample_balls(spec, radii, n_max, s)?;
        let reference = Arc::new(spec.sample(m_ref, s.named("reference"))?);
        let mut sp = SignaturePartition::new(domain.clone(), reference)?;
        let mut done = 0;
        let mut out = Vec::with_capacity(schedule.len());
        for &n in schedule {
            let gens: Vec<Generator> = (done..n)
                .map(|j| Generator::Ball { center: centers.point(j).to_vec(), radius: r[j] })
                .collect();
            sp.extend(&gens)?;
            done = n;
            out.push(best_approximation(PartitionRef::Signature(&sp), target, spec)?.distance);
        }
        Ok(out)
    });
    let per_trial = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTrace::from_trials(target.label(), schedule, per_trial, 1.0 / (m_ref as f64).sqrt()))
}

/// The ±1 step function defeating uniform convergence on the cut
/// partition of [0, 1]: on every cell it is +1 left of the cell midpoint
/// and −1 right of it.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialWitness {
    /// Cell boundaries, including 0 and 1, as exact rationals.
    pub edges: Vec<BigRational>,
    /// Exact conditional mean of f on each cell.
    pub cell_means: Vec<BigRational>,
    /// ‖E[f | F] − f‖_{L¹(λ)}, exact.
    pub loss: BigRational,
}

impl AdversarialWitness {
    /// Value of f at `x` (right-continuous at the sign flips).
    pub fn eval(&self, x: f64) -> f64 {
        for w in self.edges.windows(2) {
            let hi = to_f64(&w[1]);
            if x < hi || hi >= 1.0 {
                let mid = to_f64(&((&w[0] + &w[1]) / BigRational::from_integer(BigInt::from(2))));
                return if x < mid { 1.0 } else { -1.0 };
            }
        }
        -1.0
    }

    pub fn loss_f64(&self) -> f64 {
        to_f64(&self.loss)
    }
}

fn to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

/// Builds the adversarial witness for sorted, distinct cuts in (0, 1) and
/// checks that its conditional mean vanishes on every cell.
pub fn adversarial_witness(cuts: &[f64]) -> Result<AdversarialWitness> {
    if cuts.iter().any(|c| !(*c > 0.0 && *c < 1.0)) {
        return Err(Error::config("cuts must lie in (0, 1)"));
    }
    if cuts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("cuts must be sorted and distinct"));
    }
    let mut edges = vec![BigRational::zero()];
    for c in cuts {
        edges.push(BigRational::from_float(*c).expect("finite cut"));
    }
    edges.push(BigRational::one());
    let two = BigRational::from_integer(BigInt::from(2));
    let mut cell_means = Vec::with_capacity(edges.len() - 1);
    let mut loss = BigRational::zero();
    for w in edges.windows(2) {
        let width = &w[1] - &w[0];
        let mid = (&w[0] + &w[1]) / &two;
        // ∫ f over the cell: +1 on [lo, mid), −1 on [mid, hi)
        let integral = (&mid - &w[0]) - (&w[1] - &mid);
        let mean = integral / &width;
        if !mean.is_zero() {
            return Err(Error::Invariant(format!("cell mean {mean} is not zero")));
        }
        // |E[f|A] − f| = |f| = 1 on the whole cell
        loss += (&mean - BigRational::one()).abs() * (&mid - &w[0]) + (&mean + BigRational::one()).abs() * (&w[1] - &mid);
        cell_means.push(mean);
    }
    Ok(AdversarialWitness { edges, cell_means, loss })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit1() -> MeasureSpec {
        MeasureSpec::unit_cube(1)
    }

    fn halves() -> GridPartition {
        GridPartition::from_splits(BoxRegion::unit(1), vec![vec![0.5]]).unwrap()
    }

    fn interval(a: f64, b: f64) -> TargetEvent {
        TargetEvent::Box(BoxRegion::new(vec![a], vec![b]).unwrap())
    }

    #[test]
    fn rounding_examples() {
        let g = halves();
        let r = best_approximation(PartitionRef::Grid(&g), &interval(0.0, 0.3), &unit1()).unwrap();
        assert_eq!(r.chosen, vec![true, false]);
        assert!((r.distance - 0.2).abs() < 1e-15);

        let r = best_approximation(PartitionRef::Grid(&g), &interval(0.0, 0.5), &unit1()).unwrap();
        assert_eq!(r.distance, 0.0);

        // conditional probability exactly 1/2 in both cells: ties include
        let r = best_approximation(PartitionRef::Grid(&g), &interval(0.25, 0.75), &unit1()).unwrap();
        assert_eq!(r.chosen, vec![true, true]);
        assert!((r.distance - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rounding_beats_every_union() {
        let mass = [0.1, 0.2, 0.3, 0.15, 0.25];
        let overlap = [0.05, 0.0, 0.29, 0.1, 0.01];
        let best = round_cells(&mass, &overlap).distance;
        for mask in 0u32..32 {
            let d: f64 = (0..5)
                .map(|c| if mask >> c & 1 == 1 { mass[c] - overlap[c] } else { overlap[c] })
                .sum();
            assert!(best <= d + 1e-15);
        }
    }

    #[test]
    fn zero_mass_cells_are_excluded() {
        let r = round_cells(&[0.0, 1.0], &[0.0, 0.0]);
        assert_eq!(r.chosen, vec![false, false]);
        let r = round_counts(&[0, 4], &[0, 2], 4);
        assert_eq!(r.chosen, vec![false, true]);
        assert_eq!(r.distance, 0.5);
    }

    #[test]
    fn symmetric_difference_examples() {
        let u1 = unit1();
        let s = SeededStream::from_seed(1);
        let a = interval(0.0, 0.5);
        assert_eq!(symmetric_difference(&u1, &a, &a, 100, s).unwrap().value, 0.0);
        let d = symmetric_difference(&u1, &a, &interval(0.5, 1.0), 100, s).unwrap();
        assert!((d.value - 1.0).abs() < 1e-15);
        let u2 = MeasureSpec::unit_cube(2);
        let d = symmetric_difference(&u2, &TargetEvent::CornerBox(vec![0.6, 0.6]), &TargetEvent::CornerBox(vec![0.5, 0.5]), 100, s)
            .unwrap();
        assert!((d.value - 0.11).abs() < 1e-15);
        assert_eq!(d.std_error, 0.0);
        // Monte Carlo path for balls
        let ball = TargetEvent::Ball { center: vec![0.5, 0.5], radius: 0.25 };
        let d = symmetric_difference(&u2, &ball, &TargetEvent::CornerBox(vec![0.0, 0.0]), 100_000, s).unwrap();
        assert!((d.value - std::f64::consts::PI / 16.0).abs() < 4.0 * d.std_error);
    }

    #[test]
    fn inner_box_examples() {
        let s = PointSet::from_rows(2, &[vec![0.3, 0.2], vec![0.1, 0.6], vec![0.7, 0.9]]).unwrap();
        assert_eq!(inner_box(&s, &[0.5, 0.7]), Some(vec![0.3, 0.6]));
        assert_eq!(inner_box(&s, &[0.05, 0.05]), None);
        assert_eq!(inner_box(&s, &[1.0, 1.0]), Some(vec![0.7, 0.9]));
        let ib = inner_box_approx(&s, &[0.5, 0.7], &MeasureSpec::unit_cube(2)).unwrap();
        assert!((ib.gap - (0.35 - 0.18)).abs() < 1e-15);
    }

    #[test]
    fn inner_box_gap_shrinks() {
        let spec = MeasureSpec::unit_cube(2);
        let q = [0.6, 0.4];
        let mean_gap = |n: usize| {
            let gaps: Vec<f64> = (0..50)
                .map(|t| {
                    let s = spec.sample(n, SeededStream::new(3, t)).unwrap();
                    let ib = inner_box_approx(&s, &q, &spec).unwrap();
                    if let Some(r) = &ib.r {
                        assert!(dominated(r, &q));
                    }
                    ib.gap
                })
                .collect();
            mean_se(&gaps).value
        };
        let (a, b, c) = (mean_gap(10), mean_gap(100), mean_gap(1000));
        assert!(a > b && b > c && c < 0.02, "{a} {b} {c}");
    }

    #[test]
    fn signature_rounding_uses_counts() {
        let spec = MeasureSpec::unit_cube(1);
        let sp = crate::partition::build_corner_partition(&PointSet::from_scalars(&[0.5]), &spec, 1000, SeededStream::from_seed(2))
            .unwrap();
        let r = best_approximation(PartitionRef::Signature(&sp), &interval(0.0, 0.5), &spec).unwrap();
        assert_eq!(r.distance, 0.0);
    }

    #[test]
    fn one_dimensional_trace() {
        let spec = unit1();
        let target = TargetEvent::CornerBox(vec![0.5]);
        let null = TargetEvent::CornerBox(vec![0.0]);
        let traces = monotone_convergence_trace(&spec, &[target, null], &[1, 4, 16, 32], 200, 1000, SeededStream::from_seed(4))
            .unwrap();
        assert!(traces[0].mean[3] < 0.05);
        assert!(traces[0].is_nonincreasing_within(3.0));
        assert!(traces[1].mean.iter().all(|d| *d == 0.0));
        // per trial, distances never increase along a sample path
        for row in &traces[0].per_trial {
            assert!(row.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        }
    }

    #[test]
    fn ball_trace_reaches_generated_ball() {
        let spec = MeasureSpec::unit_cube(2);
        let radii = RadiusSpec::Uniform { max: 0.3 };
        let s = SeededStream::from_seed(5);
        let (c, r) = crate::partition::sample_balls(&spec, &radii, 8, s.child(0)).unwrap();
        let target = TargetEvent::Ball { center: c.point(3).to_vec(), radius: r[3] };
        let trace = ball_convergence_trace(&spec, &radii, &target, &[2, 4, 8], 1, 2000, s).unwrap();
        assert_eq!(trace.mean[1], 0.0);
        assert!(trace.floor > 0.0);
    }

    #[test]
    fn adversarial_examples() {
        let w = adversarial_witness(&[0.2, 0.6]).unwrap();
        assert!(w.loss.is_one());
        assert!(w.cell_means.iter().all(|m| m.is_zero()));
        let w = adversarial_witness(&[]).unwrap();
        assert_eq!(w.loss_f64(), 1.0);
        assert_eq!(w.eval(0.25), 1.0);
        assert_eq!(w.eval(0.75), -1.0);
        assert!(adversarial_witness(&[0.6, 0.2]).is_err());
    }

    #[test]
    fn trace_csv_schema() {
        let t = ConvergenceTrace::from_trials("t".into(), &[1, 2], vec![vec![0.5, 0.25]], 0.0);
        let mut buf = Vec::new();
        write_traces_csv(&mut buf, &[t]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "target-id,n,trial-mean-distance,std-error,trials");
        assert_eq!(text.lines().count(), 3);
    }
}
